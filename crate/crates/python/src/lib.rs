//! Python bindings: agreement statistics, near-duplicate filtering, question
//! generation, the boosted-tree evaluator and an in-memory lab service.
//!
//! Structured results cross the boundary as plain dicts and lists (via JSON),
//! so they match the service's HTTP payloads field for field.

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use labassess_core::analytics;
use labassess_core::evaluator::{self, gbt::RAW_SCHEMA, GbtConfig};
use labassess_core::genpipe::{bank_vectorizer, generate_batch, GenerationRequest, TemplateGenerator};
use labassess_core::textsim::{self, TfIdfVectorizer, Vectorizer};
use labassess_core::{read_corpus, Difficulty, Role};
use labassess_svc::{LabService, ManualClock, NewLab, NewUser, ReportScope, ServiceConfig, SessionToken, SystemClock};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(labassess, ServiceError, PyException, "A lab service operation was refused.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn service_err(e: labassess_svc::ServiceError) -> PyErr {
    ServiceError::new_err((e.code(), e.to_string()))
}

/// Converts a serializable value into native Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Converts a Python object (dict, list, ...) into a deserializable value.
fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn parse_difficulty(s: &str) -> PyResult<Difficulty> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown difficulty `{s}` (expected Easy, Medium or Hard)")))
}

fn parse_role(s: &str) -> PyResult<Role> {
    match s.to_ascii_lowercase().as_str() {
        "faculty" => Ok(Role::Faculty),
        "student" => Ok(Role::Student),
        _ => Err(PyValueError::new_err(format!("unknown role `{s}`"))),
    }
}

/// Pearson correlation of two equal-length sequences.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    Ok(analytics::pearson(&x, &y).map_err(value_err)?.value)
}

/// Spearman rank correlation (average ranks for ties).
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    Ok(analytics::spearman(&x, &y).map_err(value_err)?.value)
}

/// Cohen's kappa over five 20-mark bands.
#[pyfunction]
fn cohen_kappa(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    Ok(analytics::cohen_kappa(&a, &b).map_err(value_err)?.kappa)
}

/// Full agreement report for (ai, faculty) mark pairs.
#[pyfunction]
fn agreement_report(py: Python<'_>, pairs: Vec<(f64, f64)>) -> PyResult<Py<PyAny>> {
    to_py(py, &analytics::agreement_report(&pairs).map_err(value_err)?)
}

/// TF-IDF cosine similarity of two texts, fitted on just those two.
#[pyfunction]
fn similarity(a: &str, b: &str) -> f64 {
    let vz = TfIdfVectorizer::fit([a, b]);
    textsim::cosine(&vz.vectorize(a), &vz.vectorize(b))
}

/// Greedy near-duplicate filter over (id, text) pairs, in order.
/// Returns (kept_ids, [(dropped_id, duplicate_of)]).
#[pyfunction]
#[pyo3(signature = (questions, threshold = textsim::DEFAULT_DEDUP_THRESHOLD))]
#[allow(clippy::type_complexity)]
fn dedup_filter(questions: Vec<(String, String)>, threshold: f64) -> PyResult<(Vec<String>, Vec<(String, String)>)> {
    let out = textsim::dedup_filter_fitted(&questions, threshold).map_err(value_err)?;
    Ok((out.kept, out.dropped))
}

/// Generates `count` mutually dissimilar questions with the template backend.
#[pyfunction]
#[pyo3(signature = (keywords, difficulty = "Medium", count = 10, seed = 42))]
fn generate_questions(
    py: Python<'_>,
    keywords: Vec<String>,
    difficulty: &str,
    count: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let req = GenerationRequest { seed, ..GenerationRequest::new(keywords, parse_difficulty(difficulty)?, count) };
    let batch = generate_batch(&req, &TemplateGenerator, bank_vectorizer()).map_err(value_err)?;
    to_py(py, &batch)
}

/// Reads a JSON Lines dataset. Returns (records, rejected lines).
#[pyfunction]
fn read_dataset(py: Python<'_>, path: &str) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let outcome = read_corpus(BufReader::new(file)).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((to_py(py, &outcome.records)?, to_py(py, &outcome.rejected)?))
}

fn gbt_config(n_trees: usize, max_depth: usize, learning_rate: f64, subsample: f64, colsample: f64) -> GbtConfig {
    GbtConfig { n_trees, max_depth, learning_rate, subsample, colsample, ..GbtConfig::default() }
}

/// Gradient-boosted regression trees on raw feature rows.
#[pyclass(module = "labassess", frozen)]
struct GbtModel {
    inner: evaluator::GbtModel,
}

#[pymethods]
impl GbtModel {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_trees = 500, max_depth = 6, learning_rate = 0.05, subsample = 0.8, colsample = 0.8, seed = 42))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
        subsample: f64,
        colsample: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = gbt_config(n_trees, max_depth, learning_rate, subsample, colsample);
        let inner = evaluator::train_raw(&x, &y, &cfg, seed, RAW_SCHEMA).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: evaluator::GbtModel::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn predict(&self, row: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_raw(&row).map_err(value_err)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }

    fn __repr__(&self) -> String {
        format!("GbtModel(n_trees={}, base={:.4})", self.inner.trees.len(), self.inner.base_prediction)
    }
}

/// k-fold cross-validation on raw feature rows; returns the full report.
#[pyfunction]
#[pyo3(signature = (x, y, folds = 5, n_trees = 500, max_depth = 6, learning_rate = 0.05, subsample = 0.8, colsample = 0.8, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn cross_validate(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    folds: usize,
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
    subsample: f64,
    colsample: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let cfg = gbt_config(n_trees, max_depth, learning_rate, subsample, colsample);
    let report = evaluator::cross_validate_raw(&x, &y, &cfg, folds, seed, RAW_SCHEMA).map_err(value_err)?;
    to_py(py, &report)
}

/// An in-memory lab service. Callers are identified by the session tokens
/// returned from `login`.
#[pyclass(module = "labassess", name = "LabService", frozen)]
struct PyLabService {
    svc: LabService,
    clock: Option<Arc<ManualClock>>,
}

impl PyLabService {
    fn caller(&self, token: &str) -> PyResult<SessionToken> {
        self.svc.authenticate(token).map_err(service_err)
    }
}

#[pymethods]
impl PyLabService {
    /// `start` (RFC 3339) pins a manual clock that only moves via `advance`;
    /// without it the service follows wall-clock time.
    #[new]
    #[pyo3(signature = (model = None, seed = 42, start = None, password_iterations = 100_000))]
    fn new(model: Option<&GbtModel>, seed: u64, start: Option<&str>, password_iterations: u32) -> PyResult<Self> {
        let config = ServiceConfig { seed, password_iterations, ..ServiceConfig::default() };
        let model = model.map(|m| m.inner.clone());
        match start {
            Some(s) => {
                let at: chrono::DateTime<chrono::Utc> = s.parse().map_err(|e| PyValueError::new_err(format!("start: {e}")))?;
                let clock = Arc::new(ManualClock::new(at));
                Ok(Self { svc: LabService::in_memory(config, clock.clone(), model), clock: Some(clock) })
            }
            None => Ok(Self { svc: LabService::in_memory(config, Arc::new(SystemClock), model), clock: None }),
        }
    }

    /// Moves the manual clock forward.
    fn advance(&self, minutes: i64) -> PyResult<()> {
        let clock = self.clock.as_ref().ok_or_else(|| PyValueError::new_err("service follows the system clock"))?;
        clock.advance(chrono::Duration::minutes(minutes));
        Ok(())
    }

    #[pyo3(signature = (username, password, role, display_name = String::new(), section = None))]
    fn register_user(
        &self,
        py: Python<'_>,
        username: String,
        password: String,
        role: &str,
        display_name: String,
        section: Option<String>,
    ) -> PyResult<Py<PyAny>> {
        let user = NewUser { username, password, role: parse_role(role)?, display_name, section };
        to_py(py, &self.svc.register_user(user).map_err(service_err)?)
    }

    /// Returns a session token.
    fn login(&self, username: &str, password: &str) -> PyResult<String> {
        Ok(self.svc.login(username, password).map_err(service_err)?.token)
    }

    /// `lab` has the same fields as the create-lab request body.
    fn create_lab(&self, py: Python<'_>, token: &str, lab: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let new: NewLab = from_py(py, lab)?;
        to_py(py, &self.svc.create_lab(&self.caller(token)?, new).map_err(service_err)?)
    }

    fn allocate(&self, py: Python<'_>, token: &str, lab_id: &str, roster: Vec<String>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.allocate(&self.caller(token)?, lab_id, &roster).map_err(service_err)?)
    }

    fn activate(&self, py: Python<'_>, token: &str, lab_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.activate(&self.caller(token)?, lab_id).map_err(service_err)?)
    }

    fn close(&self, py: Python<'_>, token: &str, lab_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.close(&self.caller(token)?, lab_id).map_err(service_err)?)
    }

    fn my_labs(&self, py: Python<'_>, token: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.my_labs(&self.caller(token)?).map_err(service_err)?)
    }

    #[pyo3(signature = (token, allocation_id, code_text, language_tag = "python"))]
    fn submit_code(
        &self,
        py: Python<'_>,
        token: &str,
        allocation_id: &str,
        code_text: &str,
        language_tag: &str,
    ) -> PyResult<Py<PyAny>> {
        let caller = self.caller(token)?;
        let receipt = py.detach(|| self.svc.submit_code(&caller, allocation_id, code_text, language_tag));
        to_py(py, &receipt.map_err(service_err)?)
    }

    fn get_viva(&self, py: Python<'_>, token: &str, session_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.get_viva(&self.caller(token)?, session_id).map_err(service_err)?)
    }

    fn answer_viva(
        &self,
        py: Python<'_>,
        token: &str,
        session_id: &str,
        question_index: usize,
        answer_text: &str,
    ) -> PyResult<Py<PyAny>> {
        let caller = self.caller(token)?;
        to_py(py, &self.svc.answer_viva(&caller, session_id, question_index, answer_text).map_err(service_err)?)
    }

    fn override_score(
        &self,
        py: Python<'_>,
        token: &str,
        submission_id: &str,
        value: f64,
        reason: &str,
    ) -> PyResult<Py<PyAny>> {
        let caller = self.caller(token)?;
        to_py(py, &self.svc.override_score(&caller, submission_id, value, reason).map_err(service_err)?)
    }

    fn lab_report(&self, py: Python<'_>, token: &str, lab_id: &str) -> PyResult<Py<PyAny>> {
        let scope = ReportScope::Lab(lab_id.to_string());
        to_py(py, &self.svc.class_report(&self.caller(token)?, &scope).map_err(service_err)?)
    }

    fn my_progress(&self, py: Python<'_>, token: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.my_progress(&self.caller(token)?).map_err(service_err)?)
    }

    fn export(&self, py: Python<'_>, token: &str, submission_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.export(&self.caller(token)?, submission_id).map_err(service_err)?)
    }

    fn healthz(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.svc.healthz())
    }
}

#[pymodule]
fn labassess(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ServiceError", m.py().get_type::<ServiceError>())?;
    m.add_class::<GbtModel>()?;
    m.add_class::<PyLabService>()?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_report, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(dedup_filter, m)?)?;
    m.add_function(wrap_pyfunction!(generate_questions, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    Ok(())
}
