//! Per-student question generation with a near-duplicate screen.
//!
//! Candidates come from a [`QuestionGenerator`] backend (the built-in template
//! bank, or an external text-generation service). Each candidate is compared
//! with every question already accepted for the batch and rejected when the
//! cosine similarity reaches the threshold; a question slot is retried up to
//! `max_attempts_per_question` times before the batch fails.

mod bank;

use std::collections::HashMap;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::sha256_hex;
use crate::domain::{validate_transition, Allocation, Difficulty, GeneratorBackend, Lab, LabState};
use crate::textsim::{cosine, tokenize, TextVector, TfIdfVectorizer, Vectorizer, DEFAULT_DEDUP_THRESHOLD};

use bank::{Topic, GENERIC_TOPIC};

pub const DEFAULT_MAX_ATTEMPTS: usize = 8;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub topic_keywords: Vec<String>,
    pub difficulty: Difficulty,
    pub student_count: usize,
    pub seed: u64,
    pub backend: GeneratorBackend,
    pub max_attempts_per_question: usize,
    pub dedup_threshold: f64,
}

impl GenerationRequest {
    pub fn new(topic_keywords: Vec<String>, difficulty: Difficulty, student_count: usize) -> Self {
        Self {
            topic_keywords,
            difficulty,
            student_count,
            seed: DEFAULT_SEED,
            backend: GeneratorBackend::Template,
            max_attempts_per_question: DEFAULT_MAX_ATTEMPTS,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.topic_keywords.is_empty() || self.topic_keywords.iter().all(|k| k.trim().is_empty()) {
            return Err(GenError::InvalidRequest("topic_keywords must be nonempty".into()));
        }
        if self.student_count == 0 {
            return Err(GenError::InvalidRequest("student_count must be at least 1".into()));
        }
        if self.max_attempts_per_question == 0 {
            return Err(GenError::InvalidRequest("max_attempts_per_question must be at least 1".into()));
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(GenError::InvalidRequest(format!(
                "dedup threshold {} is outside (0, 1]",
                self.dedup_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: GeneratorBackend,
    /// Candidates drawn for this slot, including the accepted one.
    pub attempts: usize,
    pub seed: u64,
    /// Global attempt index the accepted candidate was generated with.
    pub attempt_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub question_text: String,
    pub rubric_answer: String,
    pub difficulty: Difficulty,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("only {achieved} of {requested} unique questions could be generated")]
    DiversityExhausted { achieved: usize, requested: usize },
    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("lab `{0}` is already allocated")]
    AlreadyAllocated(String),
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
}

/// Everything a backend needs to produce one candidate.
#[derive(Debug, Clone)]
pub struct CandidateRequest<'a> {
    pub keywords: &'a [String],
    pub difficulty: Difficulty,
    pub seed: u64,
    pub attempt_index: u64,
    /// SHA-256 digests of the questions already accepted in this batch.
    pub no_repeat: &'a [String],
}

pub trait QuestionGenerator: Send + Sync {
    fn backend(&self) -> GeneratorBackend;

    /// Produces one candidate as (question, rubric answer).
    fn generate(&self, req: &CandidateRequest<'_>) -> Result<(String, String), GenError>;
}

/// Offline backend over the built-in template bank.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl QuestionGenerator for TemplateGenerator {
    fn backend(&self) -> GeneratorBackend {
        GeneratorBackend::Template
    }

    fn generate(&self, req: &CandidateRequest<'_>) -> Result<(String, String), GenError> {
        let q = template_generate(req.keywords, req.difficulty, req.seed, req.attempt_index);
        Ok((q.question_text, q.rubric_answer))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable mix of a seed with a string, for deriving sub-seeds.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ crate::textsim::term_id(label))
}

fn draw_seed(keywords: &[String], difficulty: Difficulty, seed: u64, attempt_index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ attempt_index);
    h = splitmix64(h ^ u64::from(difficulty.ordinal()));
    for k in keywords {
        h = splitmix64(h ^ crate::textsim::term_id(&bank::normalize_phrase(k)));
    }
    h
}

fn fill(template: &str, slots: &HashMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or("")
}

/// Composes one question and its rubric answer from the template bank. Pure in
/// its arguments. Keywords with no matching topic use a generic
/// implement-and-evaluate template that still names the keyword.
pub fn template_generate(
    keywords: &[String],
    difficulty: Difficulty,
    seed: u64,
    attempt_index: u64,
) -> GeneratedQuestion {
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(keywords, difficulty, seed, attempt_index));
    let usable: Vec<&String> = keywords.iter().filter(|k| !k.trim().is_empty()).collect();
    let keyword = if usable.is_empty() {
        String::from("machine learning")
    } else {
        usable[rng.random_range(0..usable.len())].trim().to_string()
    };
    let topic: &Topic = bank::match_topic(&keyword).unwrap_or(&GENERIC_TOPIC);
    let name = if topic.name.is_empty() { keyword.as_str() } else { topic.name };

    let mut slots: HashMap<&str, String> = HashMap::new();
    slots.insert("kw", keyword.clone());
    slots.insert("name", name.to_string());
    slots.insert("dataset", pick(&mut rng, topic.datasets).to_string());
    slots.insert("metric", pick(&mut rng, topic.metrics).to_string());
    slots.insert("hyper", topic.hyper.to_string());
    slots.insert("value", pick(&mut rng, topic.values).to_string());
    slots.insert("split", pick(&mut rng, bank::SPLITS).to_string());
    slots.insert("folds", pick(&mut rng, bank::FOLDS).to_string());
    slots.insert("grid", pick(&mut rng, bank::GRIDS).to_string());
    slots.insert("seed_val", pick(&mut rng, bank::SEED_VALUES).to_string());
    slots.insert("repeats", pick(&mut rng, bank::REPEATS).to_string());
    slots.insert("noise", pick(&mut rng, bank::NOISE).to_string());
    slots.insert("max_lines", pick(&mut rng, bank::MAX_LINES).to_string());
    slots.insert("subset", pick(&mut rng, bank::SUBSETS).to_string());
    slots.insert("memory", pick(&mut rng, bank::MEMORY).to_string());
    slots.insert("degree", pick(&mut rng, bank::DEGREES).to_string());
    slots.insert("sigma", pick(&mut rng, bank::SIGMAS).to_string());
    slots.insert("n_features", pick(&mut rng, bank::N_FEATURES).to_string());
    slots.insert("budget", pick(&mut rng, bank::BUDGETS).to_string());

    let tier = usize::from(difficulty.ordinal() - 1);
    let opening = pick(&mut rng, bank::OPENINGS[tier]);
    let mut reqs: Vec<&str> = bank::REQUIREMENTS
        .choose_multiple(&mut rng, bank::requirement_count(difficulty))
        .copied()
        .collect();
    reqs.shuffle(&mut rng);
    let extra = pick(&mut rng, topic.extras);
    let variation = pick(&mut rng, bank::VARIATIONS);

    let mut question = fill(opening, &slots);
    question.push_str("\nRequirements:");
    for (i, r) in reqs.iter().chain([extra, variation].iter()).enumerate() {
        question.push_str(&format!("\n{}. {}", i + 1, fill(r, &slots)));
    }

    let rubric = format!(
        "Reference solution for {name} on the {dataset} dataset.\n{concept}\n```python\n\
         import numpy as np\n\
         from sklearn.model_selection import train_test_split\n\
         X, y = load_dataset(\"{dataset}\")\n\
         X_train, X_test, y_train, y_test = train_test_split(X, y, random_state={seed_val})\n\
         {code}\n\
         model.fit(X_train, y_train)\n\
         score = evaluate(model, X_test, y_test, metric=\"{metric}\")\n\
         print(\"{metric}:\", score)\n```",
        name = name,
        dataset = slots["dataset"],
        concept = topic.concept,
        seed_val = slots["seed_val"],
        code = fill(topic.code, &slots),
        metric = slots["metric"],
    );

    GeneratedQuestion {
        question_text: question,
        rubric_answer: rubric,
        difficulty,
        provenance: Provenance {
            backend: GeneratorBackend::Template,
            attempts: 1,
            seed,
            attempt_index,
        },
    }
}

/// Vectorizer with document frequencies taken from the template bank itself,
/// so boilerplate shared by every question carries little weight.
pub fn bank_vectorizer() -> &'static TfIdfVectorizer {
    static VZ: OnceLock<TfIdfVectorizer> = OnceLock::new();
    VZ.get_or_init(|| {
        let mut docs: Vec<String> = Vec::new();
        for &d in &Difficulty::ALL {
            for attempt in 0..64 {
                let kw = bank::TOPICS[attempt as usize % bank::TOPICS.len()].aliases[0].to_string();
                docs.push(template_generate(&[kw], d, 0x5eed, attempt).question_text);
            }
        }
        TfIdfVectorizer::fit(docs.iter().map(String::as_str))
    })
}

/// SHA-256 digest used in the no-repeat list sent to external backends.
pub fn question_digest(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

fn mentions_keyword(question: &str, keywords: &[String]) -> bool {
    let q = format!(" {} ", bank::normalize_phrase(question));
    keywords.iter().any(|k| {
        let k = bank::normalize_phrase(k);
        !k.is_empty() && q.contains(&format!(" {k} "))
    })
}

/// Generates `student_count` questions whose pairwise similarity stays below
/// the request's threshold. Candidates are screened in generation order.
pub fn generate_batch(
    req: &GenerationRequest,
    generator: &dyn QuestionGenerator,
    vectorizer: &dyn Vectorizer,
) -> Result<Vec<GeneratedQuestion>, GenError> {
    req.validate()?;
    if generator.backend() != req.backend {
        return Err(GenError::InvalidRequest(format!(
            "request asks for {:?} but the generator is {:?}",
            req.backend,
            generator.backend()
        )));
    }
    let mut accepted: Vec<GeneratedQuestion> = Vec::with_capacity(req.student_count);
    let mut kept_vectors: Vec<TextVector> = Vec::with_capacity(req.student_count);
    let mut digests: Vec<String> = Vec::new();
    let mut attempt_index: u64 = 0;

    for _ in 0..req.student_count {
        let mut placed = false;
        for attempt in 1..=req.max_attempts_per_question {
            let cand = CandidateRequest {
                keywords: &req.topic_keywords,
                difficulty: req.difficulty,
                seed: req.seed,
                attempt_index,
                no_repeat: &digests,
            };
            let this_index = attempt_index;
            attempt_index += 1;
            let (question, rubric) = generator.generate(&cand)?;
            if question.trim().is_empty()
                || rubric.trim().is_empty()
                || !mentions_keyword(&question, &req.topic_keywords)
            {
                continue;
            }
            let v = vectorizer.vectorize(&question);
            if kept_vectors.iter().any(|k| cosine(&v, k) >= req.dedup_threshold) {
                continue;
            }
            digests.push(question_digest(&question));
            kept_vectors.push(v);
            accepted.push(GeneratedQuestion {
                question_text: question,
                rubric_answer: rubric,
                difficulty: req.difficulty,
                provenance: Provenance {
                    backend: generator.backend(),
                    attempts: attempt,
                    seed: req.seed,
                    attempt_index: this_index,
                },
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(GenError::DiversityExhausted {
                achieved: accepted.len(),
                requested: req.student_count,
            });
        }
    }
    Ok(accepted)
}

/// Knobs for [`allocate_lab`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationKnobs {
    pub seed: u64,
    pub max_attempts_per_question: usize,
    pub dedup_threshold: f64,
}

impl Default for AllocationKnobs {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            max_attempts_per_question: DEFAULT_MAX_ATTEMPTS,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
        }
    }
}

/// Generates one question per roster entry (in roster order) and returns the
/// lab moved to Allocated together with the allocations. Nothing is returned
/// on failure, so the caller can persist the result as a single unit.
pub fn allocate_lab(
    lab: &Lab,
    roster: &[String],
    knobs: &AllocationKnobs,
    generator: &dyn QuestionGenerator,
    vectorizer: &dyn Vectorizer,
    now: DateTime<Utc>,
) -> Result<(Lab, Vec<Allocation>), GenError> {
    if lab.state != LabState::Draft {
        return Err(GenError::AlreadyAllocated(lab.lab_id.clone()));
    }
    if roster.is_empty() {
        return Err(GenError::InvalidRoster("roster is empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for s in roster {
        if !seen.insert(s) {
            return Err(GenError::InvalidRoster(format!("student `{s}` listed twice")));
        }
    }
    let req = GenerationRequest {
        topic_keywords: lab.topic_keywords.clone(),
        difficulty: lab.difficulty,
        student_count: roster.len(),
        seed: knobs.seed,
        backend: generator.backend(),
        max_attempts_per_question: knobs.max_attempts_per_question,
        dedup_threshold: knobs.dedup_threshold,
    };
    let questions = generate_batch(&req, generator, vectorizer)?;

    debug_assert!(validate_transition(lab.state, LabState::Allocated).is_accepted());
    let mut next = lab.clone();
    next.state = LabState::Allocated;
    let allocations = roster
        .iter()
        .zip(questions)
        .enumerate()
        .map(|(i, (student, q))| Allocation {
            allocation_id: format!("{}-a{:03}", lab.lab_id, i + 1),
            lab_id: lab.lab_id.clone(),
            student_id: student.clone(),
            question_text: q.question_text,
            rubric_answer: q.rubric_answer,
            generated_at: now,
            generator_backend: q.provenance.backend,
        })
        .collect();
    Ok((next, allocations))
}

/// `n` conceptual viva questions with reference answers, drawn from the topics
/// matching `keywords` plus generic questions about the keyword.
pub fn viva_questions(keywords: &[String], n: usize, seed: u64) -> Vec<(String, String)> {
    let mut pool: Vec<(String, String)> = Vec::new();
    let mut seen_topics = Vec::new();
    for kw in keywords {
        if let Some(t) = bank::match_topic(kw) {
            if !seen_topics.contains(&t.key) {
                seen_topics.push(t.key);
                pool.extend(t.viva.iter().map(|(q, a)| (q.to_string(), a.to_string())));
            }
        }
    }
    let kw = keywords.first().map(|k| k.trim().to_string()).unwrap_or_default();
    let generic: Vec<(String, String)> = bank::GENERIC_VIVA
        .iter()
        .map(|(q, a)| (q.replace("{kw}", &kw), a.replace("{kw}", &kw)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    pool.shuffle(&mut rng);
    let mut out: Vec<(String, String)> = pool.into_iter().take(n).collect();
    let mut generic = generic;
    generic.shuffle(&mut rng);
    out.extend(generic.into_iter().take(n.saturating_sub(out.len())));
    out
}

/// Largest number of viva questions [`viva_questions`] can always provide.
pub const MAX_VIVA_QUESTIONS: usize = 5;

/// Maximum pairwise cosine similarity over `texts`.
pub fn max_pairwise_similarity(texts: &[String], vectorizer: &dyn Vectorizer) -> f64 {
    let vs: Vec<TextVector> = texts.iter().map(|t| vectorizer.vectorize(t)).collect();
    let mut best = 0.0f64;
    for i in 0..vs.len() {
        for j in (i + 1)..vs.len() {
            best = best.max(cosine(&vs[i], &vs[j]));
        }
    }
    best
}

/// Token count of a text under the shared tokenizer.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}
