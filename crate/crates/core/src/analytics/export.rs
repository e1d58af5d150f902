//! CSV and schema-versioned JSON exports for dashboards and offline plots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::errors::{ErrorHistogram, ErrorRow, HIST_RANGE};
use super::progress::ActivityHeatmap;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A report wrapped with its kind and schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument<T> {
    pub kind: String,
    pub schema_version: u32,
    pub report: T,
}

impl<T: Serialize> ReportDocument<T> {
    pub fn new(kind: &str, report: T) -> Self {
        Self { kind: kind.to_string(), schema_version: REPORT_SCHEMA_VERSION, report }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// `id,actual,predicted,deviation,topic`, one row per input.
pub fn write_error_rows_csv<W: Write>(rows: &[ErrorRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "actual", "predicted", "deviation", "topic"])?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.actual.to_string(),
            r.predicted.to_string(),
            r.deviation().to_string(),
            r.topic.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `ai,faculty` scatter pairs.
pub fn write_scatter_csv<W: Write>(pairs: &[(f64, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ai", "faculty"])?;
    for (a, f) in pairs {
        w.write_record([a.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `bin,count` with `underflow` and `overflow` rows at the ends.
pub fn write_histogram_csv<W: Write>(h: &ErrorHistogram, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin", "count"])?;
    w.write_record(["underflow".to_string(), h.underflow.to_string()])?;
    for (c, n) in (-HIST_RANGE..=HIST_RANGE).zip(&h.counts) {
        w.write_record([c.to_string(), n.to_string()])?;
    }
    w.write_record(["overflow".to_string(), h.overflow.to_string()])?;
    w.flush()?;
    Ok(())
}

/// `weekday,week0,week1,...` with ISO weekday numbers (1 = Monday).
pub fn write_heatmap_csv<W: Write>(h: &ActivityHeatmap, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["weekday".to_string()];
    header.extend((0..h.weeks).map(|i| format!("week{i}")));
    w.write_record(&header)?;
    for (day, row) in h.counts.iter().enumerate() {
        let mut rec = vec![(day + 1).to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_has_one_line_per_pair() {
        let mut buf = Vec::new();
        write_scatter_csv(&[(1.0, 2.0), (3.5, 4.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ai,faculty\n1,2\n3.5,4\n");
    }

    #[test]
    fn document_carries_schema_version() {
        let doc = ReportDocument::new("agreement", 5u8);
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["kind"], "agreement");
    }
}
