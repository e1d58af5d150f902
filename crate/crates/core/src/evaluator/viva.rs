use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grading::score_band;
use crate::textsim::{text_cosine, tokenize, Vectorizer};

/// Answers with fewer tokens than this are capped at [`SHORT_ANSWER_CAP`].
pub const SHORT_ANSWER_TOKENS: usize = 10;
pub const SHORT_ANSWER_CAP: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VivaError {
    #[error("rubric answer is empty")]
    EmptyRubric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaScore {
    pub score: f64,
    pub feedback: String,
}

/// `100 · cosine(answer, rubric)`, capped for very short answers.
pub fn score_viva_answer(answer: &str, rubric: &str, vectorizer: &dyn Vectorizer) -> Result<VivaScore, VivaError> {
    if tokenize(rubric).is_empty() {
        return Err(VivaError::EmptyRubric);
    }
    let mut score = 100.0 * text_cosine(vectorizer, answer, rubric);
    let short = tokenize(answer).len() < SHORT_ANSWER_TOKENS;
    if short {
        score = score.min(SHORT_ANSWER_CAP);
    }
    let mut feedback = format!("viva answer: {score:.1}/100 ({})", score_band(score));
    if short {
        feedback.push_str("; answer too short to show reasoning, explain in full sentences");
    }
    Ok(VivaScore { score, feedback })
}
