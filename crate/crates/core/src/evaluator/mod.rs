//! Automated grading: feature extraction, the boosted tree regressor,
//! cross-validation, weighted grade aggregation and viva answer scoring.

pub mod cv;
pub mod features;
pub mod gbt;
pub mod grading;
pub mod viva;

pub use cv::{cross_validate, cross_validate_raw, CvPrediction, CvReport};
pub use features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES, FEATURE_SCHEMA_VERSION};
pub use gbt::{predict, train_gbt, train_raw, GbtConfig, GbtError, GbtModel, Node, RegressionTree};
pub use grading::{
    grade_features, grade_submission, weighted_final, AggregationWeights, GradeBreakdown, GradingConfig,
    GradingError, PiecewiseLinear,
};
pub use viva::{score_viva_answer, VivaError, VivaScore};

use crate::textsim::TfIdfVectorizer;

/// Vectorizer used for the evaluator's similarity features: log-scaled term
/// frequency without corpus statistics, so trained models need no stored
/// vocabulary.
pub fn feature_vectorizer() -> TfIdfVectorizer {
    TfIdfVectorizer::uniform()
}
