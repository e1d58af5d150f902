//! Core library for lab assessment: dataset interchange, deterministic text
//! similarity, per-student question generation, feature-based grading with a
//! gradient-boosted tree ensemble, and agreement/error analytics.
//!
//! The service layer (`labassess-svc`) and the command-line front end build on
//! the types re-exported here.

pub mod analytics;
pub mod artifact;
pub mod dataset;
pub mod domain;
pub mod evaluator;
pub mod genpipe;
pub mod textsim;

pub use dataset::{parse_dataset_line, read_corpus, DatasetError, DatasetRecord, IngestOutcome};
pub use domain::{
    validate_transition, Allocation, Difficulty, GeneratorBackend, Lab, LabMode, LabState, Role,
    Submission, Transition, User,
};

/// Tolerance used when comparing marks.
pub const MARK_EPSILON: f64 = 1e-9;

/// Returns true when `mark` lies in `[0, 100]` (with [`MARK_EPSILON`] slack).
pub fn mark_in_range(mark: f64) -> bool {
    mark.is_finite() && (-MARK_EPSILON..=100.0 + MARK_EPSILON).contains(&mark)
}
