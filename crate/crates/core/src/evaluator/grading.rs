//! Dimension scores and the final weighted grade.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{extract_features, FeatureVector};
use super::gbt::{predict, GbtError, GbtModel};
use crate::domain::{Allocation, Difficulty};
use crate::textsim::Vectorizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub correctness: f64,
    pub readability: f64,
    pub complexity: f64,
}

impl Default for AggregationWeights {
    fn default() -> Self {
        Self { correctness: 0.6, readability: 0.2, complexity: 0.2 }
    }
}

impl AggregationWeights {
    pub fn validate(&self) -> Result<(), GradingError> {
        let w = [self.correctness, self.readability, self.complexity];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GradingError::InvalidWeights(w));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradingError {
    #[error("weights {0:?} must be nonnegative and sum to 1")]
    InvalidWeights([f64; 3]),
    #[error(transparent)]
    Model(#[from] GbtError),
}

/// Piecewise-linear map given by breakpoints sorted by x. Values outside the
/// covered range take the nearest endpoint's y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: &[(f64, f64)]) -> Self {
        Self { points: points.to_vec() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        match pts.len() {
            0 => return 0.0,
            1 => return pts[0].1,
            _ => {}
        }
        if x <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x <= x1 {
                if x1 == x0 {
                    return y1;
                }
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Rescaling tables for the readability and complexity dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingConfig {
    pub weights: AggregationWeights,
    pub comment_ratio: PiecewiseLinear,
    pub mean_line_length: PiecewiseLinear,
    pub max_nesting_depth: PiecewiseLinear,
    pub branch_keyword_count: PiecewiseLinear,
}

impl Default for GradingConfig {
    fn default() -> Self {
        Self {
            weights: AggregationWeights::default(),
            comment_ratio: PiecewiseLinear::new(&[(0.0, 40.0), (0.1, 80.0), (0.2, 100.0), (0.4, 100.0), (0.7, 60.0), (1.0, 30.0)]),
            mean_line_length: PiecewiseLinear::new(&[(0.0, 0.0), (8.0, 60.0), (20.0, 100.0), (60.0, 100.0), (100.0, 60.0), (160.0, 20.0)]),
            max_nesting_depth: PiecewiseLinear::new(&[(0.0, 60.0), (1.0, 85.0), (2.0, 100.0), (4.0, 100.0), (6.0, 70.0), (10.0, 30.0)]),
            branch_keyword_count: PiecewiseLinear::new(&[(0.0, 60.0), (2.0, 90.0), (4.0, 100.0), (15.0, 100.0), (30.0, 70.0), (60.0, 30.0)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeBreakdown {
    pub correctness_score: f64,
    pub readability_score: f64,
    pub complexity_score: f64,
    pub weights: AggregationWeights,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub feedback: Vec<String>,
}

/// `Σ weight · score` clamped to `[0, 100]`. Terms are summed in sorted order
/// so the result does not depend on the order of the pairs.
pub fn weighted_final(pairs: &[(f64, f64)]) -> f64 {
    let mut terms: Vec<f64> = pairs.iter().map(|(s, w)| s * w).collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>().clamp(0.0, 100.0)
}

pub fn score_band(score: f64) -> &'static str {
    match score {
        s if s >= 85.0 => "excellent",
        s if s >= 70.0 => "good",
        s if s >= 50.0 => "fair",
        _ => "needs work",
    }
}

/// Per-slot scores on [0, 100] for the slots that carry a quality signal.
pub fn slot_scores(fv: &FeatureVector, cfg: &GradingConfig) -> [(&'static str, f64); 6] {
    [
        ("comment_ratio", cfg.comment_ratio.eval(fv.comment_ratio)),
        ("mean_line_length", cfg.mean_line_length.eval(fv.mean_line_length)),
        ("max_nesting_depth", cfg.max_nesting_depth.eval(fv.max_nesting_depth)),
        ("branch_keyword_count", cfg.branch_keyword_count.eval(fv.branch_keyword_count)),
        ("qa_similarity", 100.0 * fv.qa_similarity),
        ("rubric_similarity", 100.0 * fv.rubric_similarity),
    ]
}

/// Grades an already extracted feature vector.
pub fn grade_features(
    model: &GbtModel,
    fv: &FeatureVector,
    cfg: &GradingConfig,
) -> Result<GradeBreakdown, GradingError> {
    cfg.weights.validate()?;
    let correctness = predict(model, fv)?;
    let slots = slot_scores(fv, cfg);
    let readability = ((slots[0].1 + slots[1].1) / 2.0).clamp(0.0, 100.0);
    let complexity = ((slots[2].1 + slots[3].1) / 2.0).clamp(0.0, 100.0);
    let w = cfg.weights;
    let final_score = weighted_final(&[
        (correctness, w.correctness),
        (readability, w.readability),
        (complexity, w.complexity),
    ]);

    let mut weakest: Vec<(usize, &str, f64)> = slots.iter().enumerate().map(|(i, (n, s))| (i, *n, *s)).collect();
    weakest.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let feedback = vec![
        format!("correctness: {correctness:.1}/100 ({})", score_band(correctness)),
        format!("readability: {readability:.1}/100 ({})", score_band(readability)),
        format!("complexity: {complexity:.1}/100 ({})", score_band(complexity)),
        format!(
            "weakest signals: {} ({:.1}), {} ({:.1})",
            weakest[0].1, weakest[0].2, weakest[1].1, weakest[1].2
        ),
    ];
    Ok(GradeBreakdown {
        correctness_score: correctness,
        readability_score: readability,
        complexity_score: complexity,
        weights: w,
        final_score,
        feedback,
    })
}

/// Extracts features from the submitted code against the allocation's
/// question and rubric, then grades them.
pub fn grade_submission(
    code: &str,
    allocation: &Allocation,
    difficulty: Difficulty,
    model: &GbtModel,
    cfg: &GradingConfig,
    vectorizer: &dyn Vectorizer,
) -> Result<GradeBreakdown, GradingError> {
    let fv = extract_features(code, &allocation.question_text, &allocation.rubric_answer, difficulty, vectorizer);
    grade_features(model, &fv, cfg)
}
