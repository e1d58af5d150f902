//! JSON Lines interchange for the six-field question/answer dataset.
//!
//! Each line is one object with the keys `Id`, `question`, `answer`,
//! `category`, `marksAI` and `marksFaculty`. The two mark fields are optional.
//! Unknown keys are ignored on input; [`DatasetRecord::to_canonical_line`]
//! always writes the keys in that fixed order, so the output is byte-stable.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::Difficulty;
use crate::mark_in_range;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRecord {
    #[serde(rename = "Id")]
    pub id: String,
    pub question: String,
    pub answer: String,
    pub category: Difficulty,
    #[serde(rename = "marksAI", skip_serializing_if = "Option::is_none")]
    pub marks_ai: Option<f64>,
    #[serde(rename = "marksFaculty", skip_serializing_if = "Option::is_none")]
    pub marks_faculty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` has the wrong type")]
    WrongType(String),
    #[error("field `{0}` is outside [0, 100]")]
    OutOfRange(String),
    #[error("unknown category `{0}` (expected Easy, Medium or Hard)")]
    BadCategory(String),
    #[error("field `question` is empty")]
    EmptyQuestion,
    #[error("duplicate id `{id}` (first seen on line {first_line})")]
    DuplicateId { id: String, first_line: usize },
}

impl DatasetRecord {
    /// Serializes to one JSON line (no trailing newline).
    pub fn to_canonical_line(&self) -> String {
        serde_json::to_string(self).expect("dataset record serializes")
    }
}

fn required_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, DatasetError> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(DatasetError::MissingField(key.to_string())),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(DatasetError::WrongType(key.to_string())),
    }
}

fn optional_mark(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>, DatasetError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => {
            let v = n.as_f64().ok_or_else(|| DatasetError::WrongType(key.to_string()))?;
            if mark_in_range(v) {
                Ok(Some(v.clamp(0.0, 100.0)))
            } else {
                Err(DatasetError::OutOfRange(key.to_string()))
            }
        }
        Some(_) => Err(DatasetError::WrongType(key.to_string())),
    }
}

/// Parses and validates one dataset line.
pub fn parse_dataset_line(line: &str) -> Result<DatasetRecord, DatasetError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| DatasetError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| DatasetError::MalformedJson("expected a JSON object".into()))?;

    let id = match obj.get("Id") {
        None | Some(Value::Null) => return Err(DatasetError::MissingField("Id".into())),
        Some(Value::String(s)) => s.clone(),
        // integer ids are accepted and stored in their decimal form
        Some(Value::Number(n)) if n.is_u64() || n.is_i64() => n.to_string(),
        Some(_) => return Err(DatasetError::WrongType("Id".into())),
    };
    let question = required_str(obj, "question")?;
    if question.trim().is_empty() {
        return Err(DatasetError::EmptyQuestion);
    }
    let answer = required_str(obj, "answer")?;
    let category_raw = required_str(obj, "category")?;
    let category = category_raw
        .parse::<Difficulty>()
        .map_err(|_| DatasetError::BadCategory(category_raw.to_string()))?;

    Ok(DatasetRecord {
        id,
        question: question.to_string(),
        answer: answer.to_string(),
        category,
        marks_ai: optional_mark(obj, "marksAI")?,
        marks_faculty: optional_mark(obj, "marksFaculty")?,
    })
}

/// A line that failed validation during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedLine {
    /// 1-based line number in the input.
    pub line: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<DatasetRecord>,
    pub rejected: Vec<RejectedLine>,
}

impl IngestOutcome {
    /// Record counts per category, in Easy/Medium/Hard order.
    pub fn category_counts(&self) -> [(Difficulty, usize); 3] {
        Difficulty::ALL.map(|d| (d, self.records.iter().filter(|r| r.category == d).count()))
    }
}

/// Reads a JSONL corpus. Blank lines are skipped; invalid lines and repeated
/// ids are collected in `rejected` with their line numbers.
pub fn read_corpus<R: BufRead>(reader: R) -> std::io::Result<IngestOutcome> {
    let mut out = IngestOutcome::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_dataset_line(&line) {
            Ok(rec) => {
                if let Some(&first_line) = seen.get(&rec.id) {
                    let err = DatasetError::DuplicateId { id: rec.id.clone(), first_line };
                    out.rejected.push(RejectedLine { line: line_no, error: err.to_string() });
                } else {
                    seen.insert(rec.id.clone(), line_no);
                    out.records.push(rec);
                }
            }
            Err(e) => out.rejected.push(RejectedLine { line: line_no, error: e.to_string() }),
        }
    }
    Ok(out)
}
