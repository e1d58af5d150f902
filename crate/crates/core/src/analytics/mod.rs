//! Agreement statistics, error distributions and progress profiles. Every
//! function here is pure.

pub mod errors;
pub mod export;
pub mod progress;
pub mod stats;

use thiserror::Error;

pub use errors::{error_report, ErrorHistogram, ErrorReport, ErrorRow, WorstCase};
pub use export::ReportDocument;
pub use progress::{build_progress_profile, ActivityHeatmap, ProgressEvent, ProgressEventKind, ProgressPoint, ProgressProfile};
pub use stats::{agreement_report, cohen_kappa, pearson, spearman, AgreementReport, Correlation, KappaResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 values, got {0}")]
    TooFew(usize),
    #[error("no rows")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("mark at index {0} is outside [0, 100]")]
    MarkOutOfRange(usize),
    #[error("event for {found} in a profile of {expected}")]
    MixedSubjects { expected: String, found: String },
}
