//! Deterministic text vectors and cosine similarity.
//!
//! The built-in backend is a TF-IDF vectorizer: Unicode lowercasing, tokens
//! split on non-alphanumeric characters, log-scaled term frequency
//! (`1 + ln tf`) times smoothed inverse document frequency
//! (`ln((1 + N) / (1 + df)) + 1`). With no corpus statistics every idf is 1.
//! Anything that implements [`Vectorizer`] can be plugged into the cosine,
//! report and filter operations below.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetRecord;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.85;
pub const HISTOGRAM_BINS: usize = 20;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Stable 64-bit FNV-1a id of a term.
pub fn term_id(term: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    term.bytes().fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Sparse vector sorted by term id, with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TextVector {
    weights: Vec<(u64, f64)>,
    norm: f64,
}

impl TextVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a vector from arbitrary (id, weight) pairs. Zero weights are
    /// dropped and repeated ids are summed.
    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Self {
        let mut map: BTreeMap<u64, f64> = BTreeMap::new();
        for (id, w) in pairs {
            *map.entry(id).or_insert(0.0) += w;
        }
        let weights: Vec<(u64, f64)> = map.into_iter().filter(|(_, w)| *w != 0.0).collect();
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Self { weights, norm }
    }

    /// Dense embedding, keyed by dimension index.
    pub fn from_dense(values: &[f32]) -> Self {
        Self::from_pairs(values.iter().enumerate().map(|(i, v)| (i as u64, f64::from(*v))))
    }

    pub fn weights(&self) -> &[(u64, f64)] {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    pub fn weight(&self, id: u64) -> f64 {
        self.weights
            .binary_search_by_key(&id, |(k, _)| *k)
            .map(|i| self.weights[i].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, other: &TextVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.weights.len() && j < other.weights.len() {
            let (a, b) = (self.weights[i], other.weights[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Text in, vector out. Must be deterministic for a fixed configuration.
pub trait Vectorizer: Send + Sync {
    fn vectorize(&self, text: &str) -> TextVector;
}

impl<V: Vectorizer + ?Sized> Vectorizer for &V {
    fn vectorize(&self, text: &str) -> TextVector {
        (**self).vectorize(text)
    }
}

impl<V: Vectorizer + ?Sized> Vectorizer for Box<V> {
    fn vectorize(&self, text: &str) -> TextVector {
        (**self).vectorize(text)
    }
}

impl<V: Vectorizer + ?Sized> Vectorizer for std::sync::Arc<V> {
    fn vectorize(&self, text: &str) -> TextVector {
        (**self).vectorize(text)
    }
}

/// Document frequencies gathered from a reference corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    doc_count: u64,
    doc_freq: HashMap<u64, u64>,
}

impl CorpusStats {
    pub fn from_documents<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> Self {
        let mut stats = Self::default();
        for doc in docs {
            stats.doc_count += 1;
            let terms: HashSet<u64> = tokenize(doc).iter().map(|t| term_id(t)).collect();
            for t in terms {
                *stats.doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        stats
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn idf(&self, term: u64) -> f64 {
        if self.doc_count == 0 {
            return 1.0;
        }
        let df = self.doc_freq.get(&term).copied().unwrap_or(0);
        ((1.0 + self.doc_count as f64) / (1.0 + df as f64)).ln() + 1.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct TfIdfVectorizer {
    stats: CorpusStats,
}

impl TfIdfVectorizer {
    pub fn new(stats: CorpusStats) -> Self {
        Self { stats }
    }

    /// No corpus statistics: weights are log-scaled term frequencies only.
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> Self {
        Self::new(CorpusStats::from_documents(docs))
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }
}

impl Vectorizer for TfIdfVectorizer {
    fn vectorize(&self, text: &str) -> TextVector {
        let mut tf: BTreeMap<u64, u32> = BTreeMap::new();
        for tok in tokenize(text) {
            *tf.entry(term_id(&tok)).or_insert(0) += 1;
        }
        TextVector::from_pairs(
            tf.into_iter()
                .map(|(id, n)| (id, (1.0 + f64::from(n).ln()) * self.stats.idf(id))),
        )
    }
}

/// Lookup table of vectors computed elsewhere (for example by an external
/// embedding service), with a fallback for texts it has not seen.
pub struct PrecomputedVectorizer<F> {
    table: HashMap<String, TextVector>,
    fallback: F,
}

impl<F: Vectorizer> PrecomputedVectorizer<F> {
    pub fn new(table: HashMap<String, TextVector>, fallback: F) -> Self {
        Self { table, fallback }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl<F: Vectorizer> Vectorizer for PrecomputedVectorizer<F> {
    fn vectorize(&self, text: &str) -> TextVector {
        match self.table.get(text) {
            Some(v) => v.clone(),
            None => self.fallback.vectorize(text),
        }
    }
}

/// `dot / (|a| |b|)` clamped to `[0, 1]`; zero when either vector is zero.
pub fn cosine(a: &TextVector, b: &TextVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    (a.dot(b) / (a.norm * b.norm)).clamp(0.0, 1.0)
}

pub fn text_cosine(vectorizer: &dyn Vectorizer, a: &str, b: &str) -> f64 {
    cosine(&vectorizer.vectorize(a), &vectorizer.vectorize(b))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextSimError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("threshold {0} is outside (0, 1]")]
    BadThreshold(f64),
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub pair_count: usize,
    /// Twenty equal-width bins over [0, 1]; a score of exactly 1 falls in the last bin.
    pub histogram: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

/// Index of the histogram bin holding `score`.
pub fn similarity_bin(score: f64) -> usize {
    ((score * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

impl SimilarityReport {
    /// Summarizes a set of scores. The scores are sorted first, so the result
    /// does not depend on their order.
    pub fn from_scores(mut scores: Vec<f64>) -> Self {
        scores.sort_by(f64::total_cmp);
        let mut histogram = vec![0; HISTOGRAM_BINS];
        for &s in &scores {
            histogram[similarity_bin(s)] += 1;
        }
        let n = scores.len();
        let (mean, std_dev) = if n == 0 {
            (0.0, 0.0)
        } else {
            let mean = scores.iter().sum::<f64>() / n as f64;
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        Self { pair_count: n, histogram, mean, std_dev }
    }
}

/// Question/answer similarity for every record, with a TF-IDF model fitted on
/// all question and answer texts of the corpus.
pub fn qa_similarity_report(corpus: &[DatasetRecord]) -> Result<SimilarityReport, TextSimError> {
    let vectorizer = TfIdfVectorizer::fit(
        corpus.iter().flat_map(|r| [r.question.as_str(), r.answer.as_str()]),
    );
    qa_similarity_report_with(corpus, &vectorizer)
}

pub fn qa_similarity_report_with(
    corpus: &[DatasetRecord],
    vectorizer: &dyn Vectorizer,
) -> Result<SimilarityReport, TextSimError> {
    if corpus.is_empty() {
        return Err(TextSimError::EmptyCorpus);
    }
    let scores = corpus
        .par_iter()
        .map(|r| text_cosine(vectorizer, &r.question, &r.answer))
        .collect();
    Ok(SimilarityReport::from_scores(scores))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DedupOutcome {
    pub kept: Vec<String>,
    /// (dropped id, id of the kept question that triggered the drop)
    pub dropped: Vec<(String, String)>,
}

/// Greedy near-duplicate filter in input order: a question is dropped when its
/// similarity to an already-kept question reaches `threshold`. The dropped
/// entry names the earliest such kept question.
pub fn dedup_filter(
    questions: &[(String, String)],
    threshold: f64,
    vectorizer: &dyn Vectorizer,
) -> Result<DedupOutcome, TextSimError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(TextSimError::BadThreshold(threshold));
    }
    let mut ids = HashSet::new();
    for (id, _) in questions {
        if !ids.insert(id.as_str()) {
            return Err(TextSimError::DuplicateId(id.clone()));
        }
    }

    let vectors: Vec<TextVector> = questions.par_iter().map(|(_, t)| vectorizer.vectorize(t)).collect();
    let mut kept_idx: Vec<usize> = Vec::new();
    let mut out = DedupOutcome::default();
    for (i, v) in vectors.iter().enumerate() {
        let hit = if kept_idx.len() >= 256 {
            kept_idx.par_iter().position_first(|&k| cosine(v, &vectors[k]) >= threshold)
        } else {
            kept_idx.iter().position(|&k| cosine(v, &vectors[k]) >= threshold)
        };
        match hit {
            Some(pos) => out
                .dropped
                .push((questions[i].0.clone(), questions[kept_idx[pos]].0.clone())),
            None => {
                kept_idx.push(i);
                out.kept.push(questions[i].0.clone());
            }
        }
    }
    Ok(out)
}

/// [`dedup_filter`] with a TF-IDF model fitted on the question texts.
pub fn dedup_filter_fitted(
    questions: &[(String, String)],
    threshold: f64,
) -> Result<DedupOutcome, TextSimError> {
    let vectorizer = TfIdfVectorizer::fit(questions.iter().map(|(_, t)| t.as_str()));
    dedup_filter(questions, threshold, &vectorizer)
}
