//! Correlation and agreement statistics between two markers.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::mark_in_range;

/// Number of κ bands.
pub const KAPPA_BANDS: usize = 5;
/// Lower edges of the κ bands; the last band also includes 100.
pub const KAPPA_BAND_EDGES: [f64; KAPPA_BANDS + 1] = [0.0, 20.0, 40.0, 60.0, 80.0, 100.0];

const PERFECT_SNAP: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    /// Set when either side is constant; `value` is then 0.
    pub zero_variance: bool,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooFew(x.len()));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite(i % x.len()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Correlation {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation { value: 0.0, zero_variance: true };
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    // Centring leaves a few ulps of rounding on exactly linear data; a value
    // that close to ±1 is reported as ±1.
    let value = if 1.0 - r.abs() <= PERFECT_SNAP { r.signum() } else { r };
    Correlation { value, zero_variance: false }
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, AnalyticsError> {
    check_pair(x, y)?;
    Ok(pearson_unchecked(x, y))
}

/// 1-based fractional ranks; tied values share the average of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // positions i..=j hold equal values: ranks i+1 ..= j+1
        let rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, AnalyticsError> {
    check_pair(x, y)?;
    Ok(pearson_unchecked(&average_ranks(x), &average_ranks(y)))
}

/// Band index of a mark in `[0, 100]`.
pub fn kappa_band(mark: f64) -> usize {
    ((mark / 20.0).floor().max(0.0) as usize).min(KAPPA_BANDS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    /// `confusion[a][b]` counts pairs with the first mark in band `a` and the
    /// second in band `b`.
    pub confusion: [[u64; KAPPA_BANDS]; KAPPA_BANDS],
    pub band_edges: [f64; KAPPA_BANDS + 1],
}

/// Cohen's κ over marks binned into five 20-mark bands.
pub fn cohen_kappa(a: &[f64], b: &[f64]) -> Result<KappaResult, AnalyticsError> {
    check_pair(a, b)?;
    if let Some(i) = a.iter().chain(b).position(|m| !mark_in_range(*m)) {
        return Err(AnalyticsError::MarkOutOfRange(i % a.len()));
    }
    let mut confusion = [[0u64; KAPPA_BANDS]; KAPPA_BANDS];
    for (x, y) in a.iter().zip(b) {
        confusion[kappa_band(*x)][kappa_band(*y)] += 1;
    }
    // Integer arithmetic keeps κ exactly symmetric and order-independent.
    let n = a.len() as u64;
    let agree: u64 = (0..KAPPA_BANDS).map(|i| confusion[i][i]).sum();
    let chance: u64 = (0..KAPPA_BANDS)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[i]).sum();
            row * col
        })
        .sum();
    let po = agree as f64 / n as f64;
    let pe = chance as f64 / (n * n) as f64;
    let kappa = if chance == n * n {
        // Both raters put everything in one band, so agreement is total.
        1.0
    } else {
        ((agree * n) as f64 - chance as f64) / ((n * n) as f64 - chance as f64)
    };
    Ok(KappaResult {
        kappa: kappa.clamp(-1.0, 1.0),
        observed_agreement: po,
        expected_agreement: pe,
        confusion,
        band_edges: KAPPA_BAND_EDGES,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_pairs: usize,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub cohen_kappa: f64,
    pub zero_variance: bool,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub band_confusion: [[u64; KAPPA_BANDS]; KAPPA_BANDS],
    pub band_edges: [f64; KAPPA_BANDS + 1],
}

/// Agreement between AI marks (first) and faculty marks (second). The pairs
/// are put in a canonical order first, so the report does not depend on the
/// input order.
pub fn agreement_report(pairs: &[(f64, f64)]) -> Result<AgreementReport, AnalyticsError> {
    if pairs.len() < 2 {
        return Err(AnalyticsError::TooFew(pairs.len()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let (ai, fac): (Vec<f64>, Vec<f64>) = sorted.into_iter().unzip();
    let p = pearson(&ai, &fac)?;
    let s = spearman(&ai, &fac)?;
    let k = cohen_kappa(&ai, &fac)?;
    Ok(AgreementReport {
        n_pairs: pairs.len(),
        pearson_r: p.value,
        spearman_rho: s.value,
        cohen_kappa: k.kappa,
        zero_variance: p.zero_variance || s.zero_variance,
        observed_agreement: k.observed_agreement,
        expected_agreement: k.expected_agreement,
        band_confusion: k.confusion,
        band_edges: k.band_edges,
    })
}
