//! Distribution of prediction errors and the worst-case list.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// Integer-centred histogram bins run from `-HIST_RANGE` to `+HIST_RANGE`.
pub const HIST_RANGE: i64 = 15;
/// Deviations with `|d| <= WITHIN_BAND` count as "within ±5".
pub const WITHIN_BAND: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub id: String,
    pub actual: f64,
    pub predicted: f64,
    pub topic: String,
}

impl ErrorRow {
    pub fn new(id: impl Into<String>, actual: f64, predicted: f64, topic: impl Into<String>) -> Self {
        Self { id: id.into(), actual, predicted, topic: topic.into() }
    }

    /// predicted − actual
    pub fn deviation(&self) -> f64 {
        self.predicted - self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub id: String,
    pub actual: f64,
    pub predicted: f64,
    pub deviation: f64,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    /// `counts[i]` is the bin centred on `i − HIST_RANGE`, covering
    /// `[c − 0.5, c + 0.5)`.
    pub counts: Vec<u64>,
    /// Deviations below `−HIST_RANGE − 0.5`.
    pub underflow: u64,
    /// Deviations at or above `HIST_RANGE + 0.5`.
    pub overflow: u64,
}

impl ErrorHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Count in the bin centred on `centre`.
    pub fn bin(&self, centre: i64) -> u64 {
        if centre.abs() > HIST_RANGE {
            return 0;
        }
        self.counts[(centre + HIST_RANGE) as usize]
    }

    /// Bin centres, in the same order as `counts`.
    pub fn centres() -> impl Iterator<Item = i64> {
        -HIST_RANGE..=HIST_RANGE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_rows: usize,
    pub histogram: ErrorHistogram,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub share_within_5: f64,
    pub worst_k: Vec<WorstCase>,
}

/// Histogram bin of a deviation: `Ok(index)` inside the range, `Err(false)`
/// for underflow and `Err(true)` for overflow.
pub fn deviation_bin(d: f64) -> Result<usize, bool> {
    let c = (d + 0.5).floor();
    if c < -(HIST_RANGE as f64) {
        Err(false)
    } else if c > HIST_RANGE as f64 {
        Err(true)
    } else {
        Ok((c as i64 + HIST_RANGE) as usize)
    }
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Error histogram, mean error, share within ±5 and the `k` largest
/// deviations (by magnitude, ties by id). `k` larger than the row count is
/// clamped.
pub fn error_report(rows: &[ErrorRow], k: usize) -> Result<ErrorReport, AnalyticsError> {
    if rows.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    if let Some(i) = rows.iter().position(|r| !r.deviation().is_finite()) {
        return Err(AnalyticsError::NonFinite(i));
    }
    let n = rows.len();
    let mut histogram = ErrorHistogram { counts: vec![0; (2 * HIST_RANGE + 1) as usize], underflow: 0, overflow: 0 };
    let mut within = 0usize;
    for r in rows {
        let d = r.deviation();
        match deviation_bin(d) {
            Ok(i) => histogram.counts[i] += 1,
            Err(false) => histogram.underflow += 1,
            Err(true) => histogram.overflow += 1,
        }
        if d.abs() <= WITHIN_BAND {
            within += 1;
        }
    }
    let mean_error = sorted_sum(rows.iter().map(ErrorRow::deviation).collect()) / n as f64;
    let mean_abs_error = sorted_sum(rows.iter().map(|r| r.deviation().abs()).collect()) / n as f64;

    let mut order: Vec<&ErrorRow> = rows.iter().collect();
    order.sort_by(|a, b| {
        b.deviation().abs().total_cmp(&a.deviation().abs()).then_with(|| a.id.cmp(&b.id))
    });
    let worst_k = order
        .into_iter()
        .take(k.min(n))
        .map(|r| WorstCase {
            id: r.id.clone(),
            actual: r.actual,
            predicted: r.predicted,
            deviation: r.deviation(),
            topic: r.topic.clone(),
        })
        .collect();

    Ok(ErrorReport {
        n_rows: n,
        histogram,
        mean_error,
        mean_abs_error,
        share_within_5: within as f64 / n as f64,
        worst_k,
    })
}
