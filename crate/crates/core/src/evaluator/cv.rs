//! k-fold cross-validation of the boosted ensemble.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_SCHEMA_VERSION};
use super::gbt::{train_raw, GbtConfig, GbtError};
use crate::genpipe::derive_seed;
use crate::mark_in_range;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    /// Index of the row in the input order.
    pub row: usize,
    pub fold: usize,
    pub actual: f64,
    pub predicted: f64,
    /// predicted − actual
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub config: GbtConfig,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub pooled_rmse: f64,
    /// `1 − SSE/SST` over all held-out predictions. When every target is the
    /// same this is 1 for a perfect fit and 0 otherwise.
    pub pooled_r2: f64,
    /// One entry per input row, in input order.
    pub predictions: Vec<CvPrediction>,
}

fn rmse(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut sse, mut n) = (0.0, 0usize);
    for e in errors {
        sse += e * e;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sse / n as f64).sqrt()
    }
}

/// Seeded shuffle, then contiguous folds (the first `n % k` folds get one
/// extra row). Returns the fold index of every row.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cv-shuffle"));
    order.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    fold_of
}

pub fn cross_validate_raw(
    x: &[Vec<f64>],
    y: &[f64],
    config: &GbtConfig,
    k: usize,
    seed: u64,
    schema: &str,
) -> Result<CvReport, GbtError> {
    if k < 2 {
        return Err(GbtError::InvalidConfig("at least 2 folds are required".into()));
    }
    let n = x.len().min(y.len());
    if n < k || n < 2 {
        return Err(GbtError::TooFewRows(n));
    }
    let fold_of = fold_assignment(n, k, seed);
    let mut predictions: Vec<Option<CvPrediction>> = vec![None; n];
    let mut fold_rmse = Vec::with_capacity(k);

    for fold in 0..k {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        if train_idx.len() < 2 {
            return Err(GbtError::TooFewRows(train_idx.len()));
        }
        let tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let model = train_raw(&tx, &ty, config, seed, schema)?;
        let mut errs = Vec::new();
        for i in (0..n).filter(|&i| fold_of[i] == fold) {
            let predicted = model.predict_raw(&x[i])?.clamp(0.0, 100.0);
            let error = predicted - y[i];
            errs.push(error);
            predictions[i] = Some(CvPrediction { row: i, fold, actual: y[i], predicted, error });
        }
        fold_rmse.push(rmse(errs.into_iter()));
    }

    let predictions: Vec<CvPrediction> = predictions.into_iter().map(|p| p.expect("every row predicted")).collect();
    let mean_rmse = fold_rmse.iter().sum::<f64>() / k as f64;
    let pooled_rmse = rmse(predictions.iter().map(|p| p.error));
    let mean_y = y[..n].iter().sum::<f64>() / n as f64;
    let sst: f64 = y[..n].iter().map(|v| (v - mean_y).powi(2)).sum();
    let sse: f64 = predictions.iter().map(|p| p.error * p.error).sum();
    let pooled_r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(CvReport {
        folds: k,
        seed,
        config: config.clone(),
        fold_rmse,
        mean_rmse,
        pooled_rmse,
        pooled_r2,
        predictions,
    })
}

/// Cross-validation over feature vectors with mark targets.
pub fn cross_validate(
    rows: &[(FeatureVector, f64)],
    config: &GbtConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport, GbtError> {
    if let Some(i) = rows.iter().position(|(_, t)| !mark_in_range(*t)) {
        return Err(GbtError::InvalidTarget(i));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|(f, _)| f.to_array().to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|(_, t)| *t).collect();
    cross_validate_raw(&x, &y, config, k, seed, FEATURE_SCHEMA_VERSION)
}
