//! Least-squares gradient-boosted regression trees.
//!
//! Each round fits a depth-limited tree to the current residuals using exact
//! greedy variance-reduction splits over a seeded row subsample and feature
//! subsample. Split thresholds are midpoints between adjacent distinct values;
//! a row goes left when its value is strictly below the threshold. Gain ties
//! keep the lowest feature index, then the lowest threshold.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{FeatureVector, FEATURE_COUNT, FEATURE_SCHEMA_VERSION};
use crate::mark_in_range;

pub const MODEL_FORMAT: &str = "labassess-gbt";
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Schema tag for models trained on plain numeric rows.
pub const RAW_SCHEMA: &str = "raw";

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub min_rows_per_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 6,
            learning_rate: 0.05,
            subsample: 0.8,
            colsample: 0.8,
            min_rows_per_leaf: 2,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<(), GbtError> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(GbtError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !frac_ok(self.subsample) || !frac_ok(self.colsample) {
            return Err(GbtError::InvalidConfig("subsample and colsample must be in (0, 1]".into()));
        }
        if self.min_rows_per_leaf == 0 {
            return Err(GbtError::InvalidConfig("min_rows_per_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GbtError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("non-finite value in row {row}, feature {feature}")]
    NonFiniteFeature { row: usize, feature: usize },
    #[error("target in row {0} is not a finite mark in [0, 100]")]
    InvalidTarget(usize),
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("feature schema mismatch: model expects {expected}, got {got}")]
    SchemaMismatch { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Nodes in preorder; the root is at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format: String,
    pub format_version: u32,
    pub feature_schema_version: String,
    pub n_features: usize,
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub subsample_fraction: f64,
    pub colsample_fraction: f64,
    pub min_rows_per_leaf: usize,
    pub seed: u64,
    pub trees: Vec<RegressionTree>,
}

impl GbtModel {
    /// A model with no trees that always predicts `base`.
    pub fn constant(base: f64, n_features: usize, schema: &str) -> Self {
        let cfg = GbtConfig::default();
        Self {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            feature_schema_version: schema.into(),
            n_features,
            base_prediction: base,
            learning_rate: cfg.learning_rate,
            n_trees: 0,
            max_depth: cfg.max_depth,
            subsample_fraction: cfg.subsample,
            colsample_fraction: cfg.colsample,
            min_rows_per_leaf: cfg.min_rows_per_leaf,
            seed: 0,
            trees: Vec::new(),
        }
    }

    /// `base + learning_rate * Σ leaf values` over the first `n_trees` trees.
    pub fn predict_staged(&self, x: &[f64], n_trees: usize) -> Result<f64, GbtError> {
        if x.len() != self.n_features {
            return Err(GbtError::SchemaMismatch {
                expected: format!("{} features", self.n_features),
                got: format!("{} features", x.len()),
            });
        }
        let sum: f64 = self.trees.iter().take(n_trees).map(|t| t.leaf_value(x)).sum();
        Ok(self.base_prediction + self.learning_rate * sum)
    }

    /// Unclamped ensemble output for a raw feature row.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, GbtError> {
        self.predict_staged(x, self.trees.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Predicted mark for a feature vector, clamped to `[0, 100]`.
pub fn predict(model: &GbtModel, fv: &FeatureVector) -> Result<f64, GbtError> {
    if model.feature_schema_version != fv.schema_version() {
        return Err(GbtError::SchemaMismatch {
            expected: model.feature_schema_version.clone(),
            got: fv.schema_version().to_string(),
        });
    }
    Ok(model.predict_raw(&fv.to_array())?.clamp(0.0, 100.0))
}

/// Trains on feature vectors with marks in `[0, 100]` as targets.
pub fn train_gbt(rows: &[(FeatureVector, f64)], config: &GbtConfig, seed: u64) -> Result<GbtModel, GbtError> {
    if let Some(i) = rows.iter().position(|(_, t)| !mark_in_range(*t)) {
        return Err(GbtError::InvalidTarget(i));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|(f, _)| f.to_array().to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|(_, t)| *t).collect();
    let model = train_raw(&x, &y, config, seed, FEATURE_SCHEMA_VERSION)?;
    debug_assert_eq!(model.n_features, FEATURE_COUNT);
    Ok(model)
}

fn validate_rows(x: &[Vec<f64>], y: &[f64]) -> Result<usize, GbtError> {
    if x.len() < 2 || y.len() < 2 {
        return Err(GbtError::TooFewRows(x.len().min(y.len())));
    }
    if x.len() != y.len() {
        return Err(GbtError::InvalidConfig(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let width = x[0].len();
    for (r, row) in x.iter().enumerate() {
        if row.len() != width {
            return Err(GbtError::RaggedRows { row: r, got: row.len(), expected: width });
        }
        if let Some(f) = row.iter().position(|v| !v.is_finite()) {
            return Err(GbtError::NonFiniteFeature { row: r, feature: f });
        }
    }
    if let Some(i) = y.iter().position(|t| !t.is_finite()) {
        return Err(GbtError::InvalidTarget(i));
    }
    Ok(width)
}

/// Trains on plain numeric rows. Deterministic for fixed row order, config and seed.
pub fn train_raw(
    x: &[Vec<f64>],
    y: &[f64],
    config: &GbtConfig,
    seed: u64,
    schema: &str,
) -> Result<GbtModel, GbtError> {
    config.validate()?;
    let n_features = validate_rows(x, y)?;
    let n = x.len();
    let base = y.iter().sum::<f64>() / n as f64;

    let mut model = GbtModel {
        format: MODEL_FORMAT.into(),
        format_version: MODEL_FORMAT_VERSION,
        feature_schema_version: schema.into(),
        n_features,
        base_prediction: base,
        learning_rate: config.learning_rate,
        n_trees: config.n_trees,
        max_depth: config.max_depth,
        subsample_fraction: config.subsample,
        colsample_fraction: config.colsample,
        min_rows_per_leaf: config.min_rows_per_leaf,
        seed,
        trees: Vec::with_capacity(config.n_trees),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // running sum of leaf values per row, so predictions match predict_raw exactly
    let mut leaf_sums = vec![0.0f64; n];
    let mut residual = vec![0.0f64; n];
    let row_take = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let feat_take = ((config.colsample * n_features as f64).round() as usize).clamp(1, n_features.max(1));

    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = y[i] - (base + config.learning_rate * leaf_sums[i]);
        }
        let rows: Vec<usize> = if row_take < n {
            let mut r = sample(&mut rng, n, row_take).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let feats: Vec<usize> = if n_features == 0 {
            Vec::new()
        } else if feat_take < n_features {
            let mut f = sample(&mut rng, n_features, feat_take).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..n_features).collect()
        };
        let tree = TreeBuilder { x, residual: &residual, config, n_rows: n }.build(rows, &feats);
        for (i, row) in x.iter().enumerate() {
            leaf_sums[i] += tree.leaf_value(row);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    residual: &'a [f64],
    config: &'a GbtConfig,
    n_rows: usize,
}

struct BestSplit {
    gain: f64,
    feature_slot: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&self, rows: Vec<usize>, feats: &[usize]) -> RegressionTree {
        let sorted: Vec<Vec<usize>> = feats
            .iter()
            .map(|&f| {
                let mut r = rows.clone();
                r.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
                r
            })
            .collect();
        let mut nodes = Vec::new();
        let mut goes_left = vec![false; self.n_rows];
        self.grow(&mut nodes, rows, sorted, feats, 0, &mut goes_left);
        RegressionTree { nodes }
    }

    fn grow(
        &self,
        nodes: &mut Vec<Node>,
        rows: Vec<usize>,
        sorted: Vec<Vec<usize>>,
        feats: &[usize],
        depth: usize,
        goes_left: &mut [bool],
    ) -> usize {
        let idx = nodes.len();
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.residual[r]).sum();
        let leaf = Node::Leaf { value: if n == 0 { 0.0 } else { sum / n as f64 } };
        nodes.push(leaf);

        let min_leaf = self.config.min_rows_per_leaf;
        if depth >= self.config.max_depth || n < 2 * min_leaf {
            return idx;
        }
        let Some(best) = self.best_split(&sorted, feats, sum, n) else {
            return idx;
        };
        let feature = feats[best.feature_slot];
        for &r in &rows {
            goes_left[r] = self.x[r][feature] < best.threshold;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| goes_left[r]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| goes_left[r]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.grow(nodes, left_rows, left_sorted, feats, depth + 1, goes_left);
        let right = self.grow(nodes, right_rows, right_sorted, feats, depth + 1, goes_left);
        nodes[idx] = Node::Split { feature, threshold: best.threshold, left, right };
        idx
    }

    fn best_split(&self, sorted: &[Vec<usize>], feats: &[usize], sum: f64, n: usize) -> Option<BestSplit> {
        let min_leaf = self.config.min_rows_per_leaf;
        let parent = sum * sum / n as f64;
        let mut best: Option<BestSplit> = None;
        for (slot, (&f, list)) in feats.iter().zip(sorted).enumerate() {
            let mut left_sum = 0.0;
            for pos in 1..n {
                left_sum += self.residual[list[pos - 1]];
                if pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.x[list[pos - 1]][f], self.x[list[pos]][f]);
                if lo >= hi {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / pos as f64 + right_sum * right_sum / (n - pos) as f64 - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if lo < mid && mid <= hi { mid } else { hi };
                    best = Some(BestSplit { gain, feature_slot: slot, threshold });
                }
            }
        }
        best
    }
}
