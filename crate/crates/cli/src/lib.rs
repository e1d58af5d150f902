//! The `labassess` command line: batch jobs over the question/answer dataset
//! and the lab service.
//!
//! Every command writes its artifacts under `--out` with fixed file names and
//! stamps each JSON artifact with a metadata block (tool version, seed, hash
//! of the run configuration, digest of the input). Exit codes: 0 success,
//! 1 validation error, 2 I/O error.

use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use labassess_core::analytics::{agreement_report, error_report, ErrorRow};
use labassess_core::analytics::export::{write_error_rows_csv, write_histogram_csv, write_scatter_csv};
use labassess_core::artifact::{sha256_hex, ArtifactMetadata};
use labassess_core::evaluator::{cross_validate, extract_features, feature_vectorizer, train_gbt, GbtConfig, GbtModel};
use labassess_core::genpipe::{bank_vectorizer, generate_batch, GenerationRequest, TemplateGenerator};
use labassess_core::textsim::{dedup_filter_fitted, qa_similarity_report, DEFAULT_DEDUP_THRESHOLD};
use labassess_core::{read_corpus, DatasetRecord, Difficulty, IngestOutcome, Role};
use labassess_svc::{LabService, NewUser, ServiceConfig, SystemClock};
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;

// fixed artifact names
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";
pub const DEDUP_KEPT_FILE: &str = "dedup_kept.jsonl";
pub const DEDUP_MANIFEST_FILE: &str = "dedup_manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const CV_REPORT_FILE: &str = "cv_report.json";
pub const CV_ERRORS_FILE: &str = "cv_errors.csv";
pub const ERROR_REPORT_FILE: &str = "error_report.json";
pub const ERROR_HISTOGRAM_FILE: &str = "error_histogram.csv";
pub const AGREEMENT_FILE: &str = "agreement.json";
pub const SCATTER_FILE: &str = "agreement_scatter.csv";
pub const QA_SIM_FILE: &str = "qa_similarity.json";
pub const QUESTIONS_FILE: &str = "questions.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

fn io_err(context: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", context.display()))
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "labassess", version, about = "Lab assessment toolkit")]
pub struct Cli {
    /// Seed for every randomized step; recorded in each artifact.
    #[arg(long, global = true, env = "LABASSESS_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory for artifacts.
    #[arg(long, global = true, env = "LABASSESS_OUT", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset file in JSON Lines form.
    #[arg(long, env = "LABASSESS_DATA")]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, env = "LABASSESS_FOLDS", default_value_t = 5)]
    pub folds: usize,
    #[arg(long, env = "LABASSESS_TREES", default_value_t = 500)]
    pub trees: usize,
    #[arg(long, env = "LABASSESS_DEPTH", default_value_t = 6)]
    pub depth: usize,
    #[arg(long, env = "LABASSESS_LR", default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, env = "LABASSESS_SUBSAMPLE", default_value_t = 0.8)]
    pub subsample: f64,
    #[arg(long, env = "LABASSESS_COLSAMPLE", default_value_t = 0.8)]
    pub colsample: f64,
}

impl TrainArgs {
    pub fn gbt_config(&self) -> GbtConfig {
        GbtConfig {
            n_trees: self.trees,
            max_depth: self.depth,
            learning_rate: self.lr,
            subsample: self.subsample,
            colsample: self.colsample,
            ..GbtConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and write it in canonical form.
    Ingest(DataArg),
    /// Drop near-duplicate questions.
    Dedup {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, env = "LABASSESS_THRESHOLD", default_value_t = DEFAULT_DEDUP_THRESHOLD)]
        threshold: f64,
    },
    /// Cross-validate and train the grading model on faculty marks.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        params: TrainArgs,
    },
    /// Agreement between AI and faculty marks.
    Agreement(DataArg),
    /// Question/answer similarity distribution.
    QaSim(DataArg),
    /// Generate a batch of unique questions with the template backend.
    Generate {
        /// Comma-separated topic keywords.
        #[arg(long, env = "LABASSESS_KEYWORDS", value_delimiter = ',')]
        keywords: Vec<String>,
        #[arg(long, env = "LABASSESS_DIFFICULTY", default_value = "Medium")]
        difficulty: Difficulty,
        #[arg(long, env = "LABASSESS_COUNT")]
        count: usize,
        #[arg(long, env = "LABASSESS_THRESHOLD", default_value_t = DEFAULT_DEDUP_THRESHOLD)]
        threshold: f64,
    },
    /// Run the lab service.
    Serve {
        /// Directory holding the event log and snapshots.
        #[arg(long, env = "LABASSESS_DATA")]
        data: PathBuf,
        #[arg(long, env = "LABASSESS_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Trained model; without it the service runs with grading disabled.
        #[arg(long, env = "LABASSESS_MODEL")]
        model: Option<PathBuf>,
        #[arg(long, env = "LABASSESS_THRESHOLD", default_value_t = DEFAULT_DEDUP_THRESHOLD)]
        threshold: f64,
    },
    /// Register an account in a service data directory.
    AddUser {
        #[arg(long, env = "LABASSESS_DATA")]
        data: PathBuf,
        #[arg(long)]
        username: String,
        #[arg(long, env = "LABASSESS_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long, value_parser = parse_role)]
        role: Role,
        #[arg(long, default_value = "")]
        display_name: String,
        #[arg(long)]
        section: Option<String>,
    },
}

fn parse_role(s: &str) -> Result<Role, String> {
    match s.to_ascii_lowercase().as_str() {
        "faculty" => Ok(Role::Faculty),
        "student" => Ok(Role::Student),
        _ => Err(format!("unknown role `{s}` (expected faculty or student)")),
    }
}

/// A JSON artifact: metadata block plus the payload.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    kind: &'a str,
    metadata: &'a ArtifactMetadata,
    report: &'a T,
}

fn write_json<T: Serialize>(out: &Path, name: &str, kind: &str, meta: &ArtifactMetadata, report: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&Artifact { kind, metadata: meta, report })
        .map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    let path = out.join(name);
    fs::write(&path, text).map_err(io_err(&path))
}

fn write_with<F>(out: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), String>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(CliError::Io)?;
    let path = out.join(name);
    fs::write(&path, buf).map_err(io_err(&path))
}

fn read_input(path: &Path) -> Result<(Vec<u8>, IngestOutcome), CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let outcome = read_corpus(BufReader::new(bytes.as_slice())).map_err(io_err(path))?;
    for r in &outcome.rejected {
        log::warn!("{}: line {}: {}", path.display(), r.line, r.error);
    }
    Ok((bytes, outcome))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))
}

/// Reads a model artifact written by `train`, or a bare model document.
pub fn load_model(path: &Path) -> Result<GbtModel, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(invalid)?;
    let model = match value.get("report") {
        Some(inner) => serde_json::from_value(inner.clone()),
        None => serde_json::from_value(value),
    };
    model.map_err(|e| invalid(format!("{}: not a model: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct IngestSummary<'a> {
    total_lines: usize,
    ingested: usize,
    rejected: &'a [labassess_core::dataset::RejectedLine],
    categories: std::collections::BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct DroppedEntry<'a> {
    id: &'a str,
    duplicate_of: &'a str,
}

#[derive(Debug, Serialize)]
struct DedupManifest<'a> {
    threshold: f64,
    kept: usize,
    dropped: Vec<DroppedEntry<'a>>,
}

#[derive(Serialize)]
struct TrainConfig<'a> {
    params: &'a TrainArgs,
    seed: u64,
}

/// Runs a command and returns the text to print on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let Cli { seed, out, command } = cli;
    match command {
        Command::Ingest(DataArg { data }) => cmd_ingest(&data, &out, seed),
        Command::Dedup { data: DataArg { data }, threshold } => cmd_dedup(&data, &out, seed, threshold),
        Command::Train { data: DataArg { data }, params } => cmd_train(&data, &out, seed, &params),
        Command::Agreement(DataArg { data }) => cmd_agreement(&data, &out, seed),
        Command::QaSim(DataArg { data }) => cmd_qa_sim(&data, &out, seed),
        Command::Generate { keywords, difficulty, count, threshold } => {
            cmd_generate(&out, seed, keywords, difficulty, count, threshold)
        }
        Command::Serve { data, addr, model, threshold } => cmd_serve(&data, &addr, model.as_deref(), seed, threshold),
        Command::AddUser { data, username, password, role, display_name, section } => {
            cmd_add_user(&data, seed, NewUser { username, password, role, display_name, section })
        }
    }
}

pub fn cmd_ingest(data: &Path, out: &Path, seed: u64) -> Result<String, CliError> {
    let (bytes, outcome) = read_input(data)?;
    if outcome.records.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no valid records ({} lines rejected)",
            data.display(),
            outcome.rejected.len()
        )));
    }
    prepare_out(out)?;
    let meta = ArtifactMetadata::new(seed, &"ingest", &bytes);
    write_with(out, CORPUS_FILE, |buf| {
        for r in &outcome.records {
            buf.extend_from_slice(r.to_canonical_line().as_bytes());
            buf.push(b'\n');
        }
        Ok(())
    })?;
    let categories = outcome.category_counts().iter().map(|(d, n)| (d.to_string(), *n)).collect();
    let summary = IngestSummary {
        total_lines: outcome.records.len() + outcome.rejected.len(),
        ingested: outcome.records.len(),
        rejected: &outcome.rejected,
        categories,
    };
    write_json(out, INGEST_SUMMARY_FILE, "ingest_summary", &meta, &summary)?;
    let mut text = format!("ingested {} records, rejected {}\n", summary.ingested, outcome.rejected.len());
    for (cat, n) in &summary.categories {
        text.push_str(&format!("  {cat}: {n}\n"));
    }
    for r in &outcome.rejected {
        text.push_str(&format!("  rejected line {}: {}\n", r.line, r.error));
    }
    Ok(text)
}

pub fn cmd_dedup(data: &Path, out: &Path, seed: u64, threshold: f64) -> Result<String, CliError> {
    let (bytes, outcome) = read_input(data)?;
    let questions: Vec<(String, String)> = outcome.records.iter().map(|r| (r.id.clone(), r.question.clone())).collect();
    let result = dedup_filter_fitted(&questions, threshold).map_err(invalid)?;
    prepare_out(out)?;
    let meta = ArtifactMetadata::new(seed, &serde_json::json!({ "threshold": threshold }), &bytes);
    let kept: std::collections::HashSet<&str> = result.kept.iter().map(String::as_str).collect();
    write_with(out, DEDUP_KEPT_FILE, |buf| {
        for r in outcome.records.iter().filter(|r| kept.contains(r.id.as_str())) {
            buf.extend_from_slice(r.to_canonical_line().as_bytes());
            buf.push(b'\n');
        }
        Ok(())
    })?;
    let manifest = DedupManifest {
        threshold,
        kept: result.kept.len(),
        dropped: result.dropped.iter().map(|(id, of)| DroppedEntry { id, duplicate_of: of }).collect(),
    };
    write_json(out, DEDUP_MANIFEST_FILE, "dedup_manifest", &meta, &manifest)?;
    Ok(format!("kept {} of {} questions, dropped {}\n", result.kept.len(), questions.len(), result.dropped.len()))
}

/// Feature rows for training: each dataset answer stands in for both the
/// submission and the rubric, with the faculty mark as the target.
pub fn training_rows(records: &[DatasetRecord]) -> Vec<(&DatasetRecord, labassess_core::evaluator::FeatureVector, f64)> {
    let vz = feature_vectorizer();
    records
        .iter()
        .filter_map(|r| {
            let target = r.marks_faculty?;
            Some((r, extract_features(&r.answer, &r.question, &r.answer, r.category, &vz), target))
        })
        .collect()
}

pub fn cmd_train(data: &Path, out: &Path, seed: u64, params: &TrainArgs) -> Result<String, CliError> {
    let (bytes, outcome) = read_input(data)?;
    let labeled = training_rows(&outcome.records);
    if labeled.len() < 2 {
        return Err(CliError::Validation(format!("need at least 2 rows with faculty marks, got {}", labeled.len())));
    }
    let config = params.gbt_config();
    let rows: Vec<_> = labeled.iter().map(|(_, fv, t)| (*fv, *t)).collect();
    let cv = cross_validate(&rows, &config, params.folds, seed).map_err(invalid)?;
    let model = train_gbt(&rows, &config, seed).map_err(invalid)?;

    prepare_out(out)?;
    let meta = ArtifactMetadata::new(seed, &TrainConfig { params, seed }, &bytes);
    write_json(out, MODEL_FILE, "gbt_model", &meta, &model)?;
    write_json(out, CV_REPORT_FILE, "cv_report", &meta, &cv)?;
    let error_rows: Vec<ErrorRow> = cv
        .predictions
        .iter()
        .map(|p| {
            let rec = labeled[p.row].0;
            ErrorRow::new(rec.id.clone(), p.actual, p.predicted, rec.category.to_string())
        })
        .collect();
    write_with(out, CV_ERRORS_FILE, |buf| write_error_rows_csv(&error_rows, buf).map_err(|e| e.to_string()))?;
    let errors = error_report(&error_rows, 10).map_err(invalid)?;
    write_json(out, ERROR_REPORT_FILE, "error_report", &meta, &errors)?;
    write_with(out, ERROR_HISTOGRAM_FILE, |buf| {
        write_histogram_csv(&errors.histogram, buf).map_err(|e| e.to_string())
    })?;
    Ok(format!(
        "trained {} trees on {} rows; {}-fold CV: mean RMSE {:.4}, pooled R² {:.4}, mean error {:+.4}\nmodel digest {}\n",
        model.trees.len(),
        rows.len(),
        cv.folds,
        cv.mean_rmse,
        cv.pooled_r2,
        errors.mean_error,
        sha256_hex(model.to_json().as_bytes()),
    ))
}

pub fn cmd_agreement(data: &Path, out: &Path, seed: u64) -> Result<String, CliError> {
    let (bytes, outcome) = read_input(data)?;
    let pairs: Vec<(f64, f64)> =
        outcome.records.iter().filter_map(|r| Some((r.marks_ai?, r.marks_faculty?))).collect();
    let report = agreement_report(&pairs).map_err(invalid)?;
    prepare_out(out)?;
    let meta = ArtifactMetadata::new(seed, &"agreement", &bytes);
    write_json(out, AGREEMENT_FILE, "agreement_report", &meta, &report)?;
    write_with(out, SCATTER_FILE, |buf| write_scatter_csv(&pairs, buf).map_err(|e| e.to_string()))?;
    Ok(format!(
        "pairs {}\npearson r {:.6}\nspearman rho {:.6}\ncohen kappa {:.6}\n",
        report.n_pairs, report.pearson_r, report.spearman_rho, report.cohen_kappa
    ))
}

pub fn cmd_qa_sim(data: &Path, out: &Path, seed: u64) -> Result<String, CliError> {
    let (bytes, outcome) = read_input(data)?;
    let report = qa_similarity_report(&outcome.records).map_err(invalid)?;
    prepare_out(out)?;
    let meta = ArtifactMetadata::new(seed, &"qa-sim", &bytes);
    write_json(out, QA_SIM_FILE, "similarity_report", &meta, &report)?;
    Ok(format!("pairs {}\nmean {:.4}\nstd {:.4}\n", report.pair_count, report.mean, report.std_dev))
}

pub fn cmd_generate(
    out: &Path,
    seed: u64,
    keywords: Vec<String>,
    difficulty: Difficulty,
    count: usize,
    threshold: f64,
) -> Result<String, CliError> {
    let req = GenerationRequest { seed, dedup_threshold: threshold, ..GenerationRequest::new(keywords, difficulty, count) };
    let questions = generate_batch(&req, &TemplateGenerator, bank_vectorizer()).map_err(invalid)?;
    prepare_out(out)?;
    let request_json = serde_json::to_vec(&req).map_err(|e| CliError::Io(e.to_string()))?;
    let meta = ArtifactMetadata::new(seed, &req, &request_json);
    write_json(out, QUESTIONS_FILE, "question_batch", &meta, &questions)?;
    Ok(format!("generated {} questions\n", questions.len()))
}

fn service_config(seed: u64, threshold: f64) -> ServiceConfig {
    ServiceConfig { seed, dedup_threshold: threshold, ..ServiceConfig::default() }
}

pub fn cmd_add_user(data: &Path, seed: u64, user: NewUser) -> Result<String, CliError> {
    let svc = LabService::open_dir(data, service_config(seed, DEFAULT_DEDUP_THRESHOLD), Arc::new(SystemClock), None)
        .map_err(io_err(data))?;
    let created = svc.register_user(user).map_err(invalid)?;
    svc.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(format!("created {:?} account {} ({})\n", created.role, created.username, created.user_id))
}

pub fn cmd_serve(data: &Path, addr: &str, model: Option<&Path>, seed: u64, threshold: f64) -> Result<String, CliError> {
    let model = match model {
        Some(p) if p.exists() => Some(load_model(p)?),
        Some(p) => {
            log::warn!("model {} not found; grading is disabled", p.display());
            None
        }
        None => {
            log::warn!("no model given; grading is disabled");
            None
        }
    };
    let svc = LabService::open_dir(data, service_config(seed, threshold), Arc::new(SystemClock), model)
        .map_err(io_err(data))?;
    let svc = Arc::new(svc);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        println!("listening on http://{local}");
        labassess_svc::http::serve(listener, svc, shutdown_signal())
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })?;
    Ok("stopped; event log flushed\n".to_string())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
