//! Lab lifecycle types shared by the generator, the evaluator and the service.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::evaluator::{AggregationWeights, GradeBreakdown};
use crate::mark_in_range;

/// Difficulty label of a question or lab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// 1 for Easy, 2 for Medium, 3 for Hard.
    pub fn ordinal(self) -> u8 {
        match self {
            Difficulty::Easy => 1,
            Difficulty::Medium => 2,
            Difficulty::Hard => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabMode {
    Proctored,
    NonProctored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabState {
    Draft,
    Allocated,
    Active,
    Closed,
}

impl LabState {
    fn rank(self) -> u8 {
        match self {
            LabState::Draft => 0,
            LabState::Allocated => 1,
            LabState::Active => 2,
            LabState::Closed => 3,
        }
    }
}

/// Outcome of [`validate_transition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Accepted,
    Rejected(String),
}

impl Transition {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Transition::Accepted)
    }
}

/// Only adjacent forward moves along Draft → Allocated → Active → Closed are accepted.
pub fn validate_transition(current: LabState, next: LabState) -> Transition {
    let (from, to) = (current.rank(), next.rank());
    if to == from + 1 {
        Transition::Accepted
    } else if to <= from {
        Transition::Rejected(format!("cannot move backwards or stay: {current:?} -> {next:?}"))
    } else {
        Transition::Rejected(format!("transition {current:?} -> {next:?} skips a state"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Faculty,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorBackend {
    Template,
    External,
}

pub const DEFAULT_VIVA_QUESTIONS: usize = 3;
pub const DEFAULT_VIVA_WEIGHT: f64 = 0.3;

/// A lab as defined by a faculty member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub lab_id: String,
    pub owner_id: String,
    pub title: String,
    /// Class the lab is assigned to.
    pub section: String,
    pub topic_keywords: Vec<String>,
    pub difficulty: Difficulty,
    pub viva_duration_minutes: u32,
    pub mode: LabMode,
    pub description: String,
    pub instructions: String,
    pub deadline: DateTime<Utc>,
    pub state: LabState,
    pub viva_question_count: usize,
    /// Share of the viva score in the final mark when a viva exists.
    pub viva_weight: f64,
    pub grade_weights: AggregationWeights,
    pub created_at: DateTime<Utc>,
    /// Set when the lab first becomes Active.
    #[serde(default)]
    pub activated_at: Option<DateTime<Utc>>,
}

impl Lab {
    /// Returns the names of every invalid field.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut bad = Vec::new();
        if self.title.trim().is_empty() {
            bad.push("title".to_string());
        }
        if self.topic_keywords.is_empty() || self.topic_keywords.iter().any(|k| k.trim().is_empty()) {
            bad.push("topic_keywords".to_string());
        }
        if self.viva_duration_minutes == 0 {
            bad.push("viva_duration".to_string());
        }
        if self.section.trim().is_empty() {
            bad.push("section".to_string());
        }
        if !(self.viva_weight.is_finite() && (0.0..=1.0).contains(&self.viva_weight)) {
            bad.push("viva_weight".to_string());
        }
        if self.grade_weights.validate().is_err() {
            bad.push("grade_weights".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

/// Binding of one generated question to one student for one lab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub allocation_id: String,
    pub lab_id: String,
    pub student_id: String,
    pub question_text: String,
    pub rubric_answer: String,
    pub generated_at: DateTime<Utc>,
    pub generator_backend: GeneratorBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub allocation_id: String,
    pub student_id: String,
    pub code_text: String,
    pub language_tag: String,
    pub submitted_at: DateTime<Utc>,
    pub ai_score: Option<f64>,
    pub faculty_override: Option<f64>,
    pub viva_score: Option<f64>,
    pub final_score: Option<f64>,
    pub feedback: Vec<String>,
    pub grade: Option<GradeBreakdown>,
    pub viva_session_id: Option<String>,
    /// Set once the viva has finished (completed or expired).
    pub completed_at: Option<DateTime<Utc>>,
}

impl Submission {
    /// Recomputes `final_score` from the stored components.
    pub fn recompute_final(&mut self, viva_weight: f64) {
        let grade_final = self.grade.as_ref().map(|g| g.final_score).or(self.ai_score);
        self.final_score = compose_final(grade_final, self.viva_score, self.faculty_override, viva_weight);
    }
}

/// Override wins; otherwise the grade is mixed with the viva score using
/// `viva_weight`. With no viva the grade stands alone.
pub fn compose_final(
    grade_final: Option<f64>,
    viva_score: Option<f64>,
    faculty_override: Option<f64>,
    viva_weight: f64,
) -> Option<f64> {
    if let Some(o) = faculty_override {
        return Some(o);
    }
    let g = grade_final?;
    let mixed = match viva_score {
        Some(v) => (1.0 - viva_weight) * g + viva_weight * v,
        None => g,
    };
    Some(mixed.clamp(0.0, 100.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub username: String,
    pub role: Role,
    pub credential_hash: String,
    pub display_name: String,
    #[serde(default)]
    pub section: Option<String>,
    #[serde(default)]
    pub disabled: bool,
}

impl User {
    pub fn validate(&self) -> Result<(), String> {
        if self.credential_hash.is_empty() {
            return Err("credential_hash".into());
        }
        if self.username.trim().is_empty() {
            return Err("username".into());
        }
        Ok(())
    }
}

/// Checks an override or score value.
pub fn check_mark(mark: f64) -> bool {
    mark_in_range(mark)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_forward_transition_accepted() {
        assert!(validate_transition(LabState::Draft, LabState::Allocated).is_accepted());
        assert!(validate_transition(LabState::Allocated, LabState::Active).is_accepted());
        assert!(validate_transition(LabState::Active, LabState::Closed).is_accepted());
    }

    #[test]
    fn backward_and_skipping_transitions_rejected() {
        assert!(!validate_transition(LabState::Active, LabState::Draft).is_accepted());
        assert!(!validate_transition(LabState::Draft, LabState::Active).is_accepted());
        assert!(!validate_transition(LabState::Closed, LabState::Closed).is_accepted());
    }

    #[test]
    fn transitions_form_a_strict_chain() {
        let all = [LabState::Draft, LabState::Allocated, LabState::Active, LabState::Closed];
        for a in all {
            for b in all {
                let ok = validate_transition(a, b).is_accepted();
                assert_eq!(ok, b.rank() == a.rank() + 1, "{a:?}->{b:?}");
                if ok {
                    // no cycle: the reverse is never accepted
                    assert!(!validate_transition(b, a).is_accepted());
                }
            }
        }
    }

    #[test]
    fn difficulty_parse_is_case_insensitive() {
        assert_eq!("hARd".parse::<Difficulty>().unwrap(), Difficulty::Hard);
        assert!("extreme".parse::<Difficulty>().is_err());
    }

    #[test]
    fn override_wins_in_final_composition() {
        assert_eq!(compose_final(Some(70.0), Some(100.0), Some(92.0), 0.3), Some(92.0));
        let mixed = compose_final(Some(70.0), Some(100.0), None, 0.3).unwrap();
        assert!((mixed - 79.0).abs() < 1e-9);
        assert_eq!(compose_final(Some(70.0), None, None, 0.3), Some(70.0));
        assert_eq!(compose_final(None, Some(50.0), None, 0.3), None);
    }
}
