//! HTTP clients for optional external backends: a question generator and a
//! text embedder. Both are plain JSON over HTTP.
//!
//! Generator: `POST {base}/generate` with `{keywords, difficulty, seed,
//! attempt_index, no_repeat}`; the reply is either `{question, answer}` or
//! `{text}` where the text holds `Question:` and `Answer:` sections.
//!
//! Embedder: `POST {base}/embed` with `{texts}`; the reply is `{vectors}`,
//! one dense vector per input text.

use std::collections::HashMap;
use std::time::Duration;

use labassess_core::genpipe::{CandidateRequest, GenError, QuestionGenerator};
use labassess_core::textsim::{PrecomputedVectorizer, TextVector, TfIdfVectorizer};
use labassess_core::GeneratorBackend;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::error::ServiceError;

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    keywords: &'a [String],
    difficulty: &'a str,
    seed: u64,
    attempt_index: u64,
    no_repeat: &'a [String],
}

#[derive(Deserialize)]
struct GenerateReply {
    question: Option<String>,
    answer: Option<String>,
    text: Option<String>,
}

/// Splits generated text into its `Question:` and `Answer:` sections
/// (labels are case-insensitive).
pub fn parse_sections(text: &str) -> Option<(String, String)> {
    let lower = text.to_ascii_lowercase();
    let q = lower.find("question:")?;
    let a = q + lower[q..].find("answer:")?;
    let question = text[q + "question:".len()..a].trim();
    let answer = text[a + "answer:".len()..].trim();
    (!question.is_empty() && !answer.is_empty()).then(|| (question.to_string(), answer.to_string()))
}

pub struct ExternalGenerator {
    agent: Agent,
    base_url: String,
    /// Extra tries after a transport failure.
    retries: u32,
}

impl ExternalGenerator {
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Self {
        Self { agent: agent(timeout), base_url: base_url.to_string(), retries }
    }
}

impl QuestionGenerator for ExternalGenerator {
    fn backend(&self) -> GeneratorBackend {
        GeneratorBackend::External
    }

    /// A reply that cannot be understood yields an empty candidate, which the
    /// batch generator counts as a failed attempt. Only transport failures
    /// (after retries) are errors.
    fn generate(&self, req: &CandidateRequest<'_>) -> Result<(String, String), GenError> {
        let body = GenerateBody {
            keywords: req.keywords,
            difficulty: req.difficulty.as_str(),
            seed: req.seed,
            attempt_index: req.attempt_index,
            no_repeat: req.no_repeat,
        };
        let url = join(&self.base_url, "generate");
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.agent.post(&url).send_json(&body) {
                Ok(mut resp) => {
                    let Ok(reply) = resp.body_mut().read_json::<GenerateReply>() else {
                        return Ok((String::new(), String::new()));
                    };
                    let pair = match (reply.question, reply.answer, reply.text) {
                        (Some(q), Some(a), _) => Some((q.trim().to_string(), a.trim().to_string())),
                        (_, _, Some(t)) => parse_sections(&t),
                        _ => None,
                    };
                    return Ok(pair.unwrap_or_default());
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(GenError::BackendUnavailable(format!("{url}: {last}")))
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f32>>,
}

pub struct ExternalEmbedder {
    agent: Agent,
    base_url: String,
}

impl ExternalEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self { agent: agent(timeout), base_url: base_url.to_string() }
    }

    /// Embeds every text in one request and returns a vectorizer that looks
    /// them up, falling back to TF-IDF for texts outside the batch.
    pub fn embed_all(&self, texts: &[String]) -> Result<PrecomputedVectorizer<TfIdfVectorizer>, ServiceError> {
        let url = join(&self.base_url, "embed");
        let reply: EmbedReply = self
            .agent
            .post(&url)
            .send_json(&EmbedBody { texts })
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| ServiceError::BackendUnavailable(format!("{url}: {e}")))?;
        if reply.vectors.len() != texts.len() {
            return Err(ServiceError::BackendUnavailable(format!(
                "{url}: {} vectors for {} texts",
                reply.vectors.len(),
                texts.len()
            )));
        }
        let table: HashMap<String, TextVector> =
            texts.iter().cloned().zip(reply.vectors.iter().map(|v| TextVector::from_dense(v))).collect();
        Ok(PrecomputedVectorizer::new(table, TfIdfVectorizer::fit(texts.iter().map(String::as_str))))
    }
}
