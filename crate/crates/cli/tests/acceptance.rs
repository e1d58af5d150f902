//! Acceptance gate: one PASS/FAIL line per criterion, each with its runtime
//! and budget. Every check is self-contained and compares against an
//! independent oracle or a fixed property.

mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use common::*;
use labassess_core::analytics::{agreement_report, cohen_kappa, pearson, spearman, AnalyticsError};
use labassess_core::evaluator::gbt::RAW_SCHEMA;
use labassess_core::evaluator::{
    cross_validate_raw, train_raw, AggregationWeights, GbtConfig, GbtModel, Node, FEATURE_COUNT,
    FEATURE_SCHEMA_VERSION,
};
use labassess_core::genpipe::{allocate_lab, bank_vectorizer, max_pairwise_similarity, AllocationKnobs, TemplateGenerator};
use labassess_core::textsim::{cosine, dedup_filter, TextVector, TfIdfVectorizer, Vectorizer, DEFAULT_DEDUP_THRESHOLD};
use labassess_core::{Difficulty, GeneratorBackend, Lab, LabMode, LabState, Role};
use labassess_svc::http::{Access, ROUTES};
use labassess_svc::state::ServiceState;
use labassess_svc::store::{FileStore, EVENTS_FILE};
use labassess_svc::{LabService, ManualClock, NewLab, NewUser, ServiceConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

// ---------------------------------------------------------------------------
// 1. statistics fixtures

fn stats_fixtures() -> Check {
    // hand-computed: sxy/sqrt(sxx*syy)
    let pearson_cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0, 5.0], &[2.0, 1.0, 4.0, 5.0], 8.0 / (8.75f64 * 10.0).sqrt()),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0], 6.0 / 60f64.sqrt()),
        (&[10.0, 20.0, 30.0], &[3.0, 1.0, 2.0], -0.5),
    ];
    for (x, y, want) in pearson_cases {
        let got = pearson(x, y).map_err(|e| e.to_string())?.value;
        ensure!(close(got, want), "pearson {x:?} {y:?}: {got} != {want}");
    }
    // tie-averaged ranks, then pearson on ranks
    let spearman_cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 6.0, 7.0, 7.0, 9.0], 9.5 / (10.0f64 * 9.5).sqrt()),
        (&[10.0, 20.0, 30.0, 40.0], &[1.0, 3.0, 2.0, 4.0], 0.8),
        (&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0], 4.5 / (4.5f64 * 5.0).sqrt()),
    ];
    for (x, y, want) in spearman_cases {
        let got = spearman(x, y).map_err(|e| e.to_string())?.value;
        ensure!(close(got, want), "spearman {x:?} {y:?}: {got} != {want}");
    }
    // five 20-mark bands: (po - pe) / (1 - pe)
    let kappa_cases: [(&[f64], &[f64], f64); 3] = [
        (&[10.0, 30.0, 50.0, 70.0, 90.0, 95.0], &[15.0, 35.0, 45.0, 75.0, 85.0, 65.0], 23.0 / 29.0),
        (&[5.0, 25.0, 45.0, 65.0, 85.0], &[25.0, 45.0, 65.0, 85.0, 5.0], -0.25),
        (&[10.0, 10.0, 30.0, 30.0], &[10.0, 30.0, 10.0, 30.0], 0.0),
    ];
    for (a, b, want) in kappa_cases {
        let got = cohen_kappa(a, b).map_err(|e| e.to_string())?.kappa;
        ensure!(close(got, want), "kappa {a:?} {b:?}: {got} != {want}");
    }
    // exact cases
    let x = [1.0, 2.0, 3.0, 4.0, 7.0];
    let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
    let anti: Vec<f64> = x.iter().map(|v| 10.0 - v).collect();
    let mono: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
    ensure!(pearson(&x, &lin).unwrap().value == 1.0, "perfect pearson not exact");
    ensure!(pearson(&x, &anti).unwrap().value == -1.0, "anti pearson not exact");
    ensure!(spearman(&x, &mono).unwrap().value == 1.0, "perfect spearman not exact");
    ensure!(spearman(&x, &anti).unwrap().value == -1.0, "anti spearman not exact");
    let marks = [12.0, 48.0, 100.0, 0.0, 63.5];
    ensure!(cohen_kappa(&marks, &marks).unwrap().kappa == 1.0, "identical kappa not exact");
    let flat = pearson(&x, &[5.0; 5]).unwrap();
    ensure!(flat.value == 0.0 && flat.zero_variance, "degenerate pearson {flat:?}");
    ensure!(spearman(&x, &[1.0; 5]).unwrap().zero_variance, "degenerate spearman not flagged");
    ensure!(agreement_report(&[(1.0, 2.0)]) == Err(AnalyticsError::TooFew(1)), "single pair accepted");
    Ok(())
}

// ---------------------------------------------------------------------------
// 2. boosted trees against an exhaustive split search

fn two_clusters() -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let left = i % 2 == 0;
        let f0 = if left { rng.random_range(0.0..0.4) } else { rng.random_range(0.6..1.0) };
        x.push(vec![f0, rng.random_range(0.0..1.0)]);
        y.push(if left { 20.0 + rng.random_range(-2.0..2.0) } else { 80.0 + rng.random_range(-2.0..2.0) });
    }
    (x, y)
}

/// Every midpoint of every feature; lowest squared error wins, first on ties.
fn exhaustive_stump(x: &[Vec<f64>], r: &[f64]) -> (usize, f64, f64, f64) {
    let mut best: Option<(f64, (usize, f64, f64, f64))> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = x.iter().map(|row| row[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let side = |left: bool| {
                let v: Vec<f64> = x.iter().zip(r).filter(|(row, _)| (row[f] < thr) == left).map(|(_, v)| *v).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let (lm, rm) = (side(true), side(false));
            let sse: f64 =
                x.iter().zip(r).map(|(row, v)| if row[f] < thr { (v - lm).powi(2) } else { (v - rm).powi(2) }).sum();
            if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-9) {
                best = Some((sse, (f, thr, lm, rm)));
            }
        }
    }
    best.unwrap().1
}

fn linear_synthetic(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 3.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = 20.0 + 30.0 * row[0] + 20.0 * row[1] - 10.0 * row[2] + 15.0 * row[3] + noise.sample(&mut rng);
        x.push(row);
        y.push(t.clamp(0.0, 100.0));
    }
    (x, y)
}

fn gbt_oracle() -> Check {
    let (x, y) = two_clusters();
    let cfg = GbtConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, subsample: 1.0, colsample: 1.0, min_rows_per_leaf: 1 };
    let model = train_raw(&x, &y, &cfg, 42, RAW_SCHEMA).map_err(|e| e.to_string())?;
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let residual: Vec<f64> = y.iter().map(|t| t - base).collect();
    let (feature, threshold, lv, rv) = exhaustive_stump(&x, &residual);
    let tree = &model.trees[0];
    match tree.nodes[0] {
        Node::Split { feature: f, threshold: t, left, right } => {
            ensure!(f == feature && t == threshold, "split ({f}, {t}) != oracle ({feature}, {threshold})");
            ensure!(tree.nodes[left] == Node::Leaf { value: lv }, "left leaf differs");
            ensure!(tree.nodes[right] == Node::Leaf { value: rv }, "right leaf differs");
        }
        ref other => return Err(format!("root is not a split: {other:?}")),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cx: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
    let constant = train_raw(&cx, &[42.5; 50], &GbtConfig { n_trees: 50, ..GbtConfig::default() }, 42, RAW_SCHEMA)
        .map_err(|e| e.to_string())?;
    for row in &cx {
        let p = constant.predict_raw(row).map_err(|e| e.to_string())?;
        ensure!(p == 42.5, "constant target predicted as {p}");
    }

    let (x, y) = linear_synthetic(200, 11);
    let cfg = GbtConfig { n_trees: 500, subsample: 1.0, colsample: 1.0, ..GbtConfig::default() };
    let model = train_raw(&x, &y, &cfg, 42, RAW_SCHEMA).map_err(|e| e.to_string())?;
    ensure!(model.trees.len() == 500, "{} trees", model.trees.len());
    let mut sums = vec![0.0f64; x.len()];
    let mse = |sums: &[f64]| {
        sums.iter().zip(&y).map(|(s, t)| (model.base_prediction + model.learning_rate * s - t).powi(2)).sum::<f64>()
            / y.len() as f64
    };
    let mut prev = mse(&sums);
    for (round, tree) in model.trees.iter().enumerate() {
        for (s, row) in sums.iter_mut().zip(&x) {
            *s += tree.leaf_value(row);
        }
        let cur = mse(&sums);
        ensure!(cur <= prev + 1e-9, "training MSE rose at round {round}: {prev} -> {cur}");
        prev = cur;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 3. cross-validation on a noisy linear target

fn cross_validation() -> Check {
    let (x, y) = linear_synthetic(500, 42);
    let report = cross_validate_raw(&x, &y, &GbtConfig::default(), 5, 42, RAW_SCHEMA).map_err(|e| e.to_string())?;
    let mean_err = report.predictions.iter().map(|p| p.error).sum::<f64>() / report.predictions.len() as f64;
    println!(
        "      pooled R² {:.4}, mean fold RMSE {:.4}, mean error {:+.4}",
        report.pooled_r2, report.mean_rmse, mean_err
    );
    ensure!(report.predictions.len() == 500, "{} predictions", report.predictions.len());
    ensure!(report.pooled_r2 >= 0.8, "pooled R² {}", report.pooled_r2);
    ensure!(report.mean_rmse <= 4.5, "mean fold RMSE {}", report.mean_rmse);
    ensure!(mean_err.abs() <= 0.5, "mean error {mean_err}");
    Ok(())
}

// ---------------------------------------------------------------------------
// 4. near-duplicate filtering

fn planted_corpus(seed: u64) -> (Vec<(String, String)>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..3000)
        .map(|_| (0..rng.random_range(3..9)).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
        .collect();
    let base: Vec<Vec<String>> = (0..800)
        .map(|_| (0..rng.random_range(14..22)).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect())
        .collect();
    let mut questions: Vec<(String, String)> =
        base.iter().enumerate().map(|(i, w)| (format!("q{i:04}"), w.join(" "))).collect();
    let mut planted = Vec::new();
    for j in 0..200 {
        let src = rng.random_range(0..800);
        let mut copy = base[src].clone();
        let pos = rng.random_range(0..copy.len());
        copy[pos] = vocab.choose(&mut rng).unwrap().clone();
        let id = format!("d{j:03}");
        planted.push(id.clone());
        let src_pos = questions.iter().position(|(q, _)| *q == format!("q{src:04}")).unwrap();
        let at = rng.random_range(src_pos + 1..=questions.len());
        questions.insert(at, (id, copy.join(" ")));
    }
    (questions, planted)
}

fn greedy_oracle(questions: &[(String, String)], threshold: f64, vz: &dyn Vectorizer) -> Vec<String> {
    let mut kept: Vec<(String, TextVector)> = Vec::new();
    for (id, text) in questions {
        let v = vz.vectorize(text);
        if kept.iter().all(|(_, k)| cosine(&v, k) < threshold) {
            kept.push((id.clone(), v));
        }
    }
    kept.into_iter().map(|(id, _)| id).collect()
}

fn dedup_property() -> Check {
    let (questions, planted) = planted_corpus(42);
    ensure!(questions.len() == 1000, "{} questions", questions.len());
    let t = DEFAULT_DEDUP_THRESHOLD;
    let vz = TfIdfVectorizer::fit(questions.iter().map(|(_, q)| q.as_str()));
    let out = dedup_filter(&questions, t, &vz).map_err(|e| e.to_string())?;
    for d in &planted {
        ensure!(out.dropped.iter().any(|(id, _)| id == d), "planted duplicate {d} kept");
    }
    let text_of = |id: &str| questions.iter().find(|(q, _)| q == id).unwrap().1.clone();
    let vecs: Vec<TextVector> = out.kept.iter().map(|id| vz.vectorize(&text_of(id))).collect();
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            let s = cosine(&vecs[i], &vecs[j]);
            ensure!(s < t, "{} and {} kept at similarity {s}", out.kept[i], out.kept[j]);
        }
    }
    let kept_q: Vec<(String, String)> = out.kept.iter().map(|id| (id.clone(), text_of(id))).collect();
    let again = dedup_filter(&kept_q, t, &vz).map_err(|e| e.to_string())?;
    ensure!(again.kept == out.kept && again.dropped.is_empty(), "second pass changed the kept set");
    ensure!(out.kept == greedy_oracle(&questions, t, &vz), "kept set differs from the greedy oracle");
    Ok(())
}

// ---------------------------------------------------------------------------
// 5. allocation uniqueness

fn draft_lab(keyword: &str, difficulty: Difficulty) -> Lab {
    let t = Utc.with_ymd_and_hms(2026, 9, 1, 9, 0, 0).unwrap();
    Lab {
        lab_id: "lab-1".into(),
        owner_id: "fac-1".into(),
        title: "Classifiers".into(),
        section: "A".into(),
        topic_keywords: vec![keyword.to_string()],
        difficulty,
        viva_duration_minutes: 10,
        mode: LabMode::NonProctored,
        description: String::new(),
        instructions: String::new(),
        deadline: t,
        state: LabState::Draft,
        viva_question_count: 3,
        viva_weight: 0.3,
        grade_weights: AggregationWeights::default(),
        created_at: t,
        activated_at: None,
    }
}

fn allocation_uniqueness() -> Check {
    let vz = bank_vectorizer();
    let now = Utc.with_ymd_and_hms(2026, 9, 2, 9, 0, 0).unwrap();
    let roster: Vec<String> = (1..=50).map(|i| format!("stu-{i:03}")).collect();
    let knobs = AllocationKnobs { seed: 42, ..AllocationKnobs::default() };
    for (kw, d) in [("svm", Difficulty::Medium), ("decision tree", Difficulty::Easy), ("lstm", Difficulty::Hard)] {
        let lab = draft_lab(kw, d);
        let (_, allocs) = allocate_lab(&lab, &roster, &knobs, &TemplateGenerator, vz, now).map_err(|e| e.to_string())?;
        ensure!(allocs.len() == 50, "{kw}: {} allocations", allocs.len());
        ensure!(allocs.iter().all(|a| a.generator_backend == GeneratorBackend::Template), "{kw}: wrong backend");
        let texts: Vec<String> = allocs.iter().map(|a| a.question_text.clone()).collect();
        // brute force over every pair
        let vecs: Vec<TextVector> = texts.iter().map(|t| vz.vectorize(t)).collect();
        let mut max = 0.0f64;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                max = max.max(cosine(&vecs[i], &vecs[j]));
            }
        }
        ensure!(max < DEFAULT_DEDUP_THRESHOLD, "{kw}: max pairwise similarity {max}");
        ensure!(max == max_pairwise_similarity(&texts, vz), "{kw}: library max disagrees with brute force");
        let (_, again) = allocate_lab(&lab, &roster, &knobs, &TemplateGenerator, vz, now).map_err(|e| e.to_string())?;
        ensure!(
            serde_json::to_vec(&allocs).unwrap() == serde_json::to_vec(&again).unwrap(),
            "{kw}: rerun with the same seed differs"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 6. the service, end to end

const PASSWORD: &str = "correct horse";
const CODE: &str = "from sklearn.svm import SVC\nfrom sklearn.model_selection import train_test_split\n\ndef run(X, y):\n    X_tr, X_te, y_tr, y_te = train_test_split(X, y, test_size=0.2)\n    clf = SVC(kernel='rbf')\n    clf.fit(X_tr, y_tr)\n    return clf.score(X_te, y_te)\n";

fn lab_request(deadline: chrono::DateTime<Utc>) -> NewLab {
    NewLab {
        title: "Classifiers lab".into(),
        section: "A".into(),
        topic_keywords: vec!["svm".into()],
        difficulty: Difficulty::Medium,
        viva_duration_minutes: 15,
        mode: LabMode::NonProctored,
        description: "Build and evaluate a classifier.".into(),
        instructions: "Submit Python code.".into(),
        deadline,
        viva_question_count: None,
        viva_weight: None,
        grade_weights: None,
    }
}

/// Scripted in-process run on a file-backed store, returning the state
/// published after every operation.
fn scripted_states(dir: &Path) -> Result<Vec<ServiceState>, String> {
    let start = Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap();
    let clock = Arc::new(ManualClock::new(start));
    let cfg = ServiceConfig { password_iterations: 1_000, snapshot_every: 0, ..ServiceConfig::default() };
    let model = GbtModel::constant(78.0, FEATURE_COUNT, FEATURE_SCHEMA_VERSION);
    let svc = LabService::open_dir(dir, cfg, clock.clone(), Some(model)).map_err(|e| e.to_string())?;
    let e = |err: labassess_svc::ServiceError| err.to_string();
    let mut states = Vec::new();
    let user = |name: &str, role| NewUser {
        username: name.into(),
        password: PASSWORD.into(),
        role,
        display_name: String::new(),
        section: None,
    };
    svc.register_user(user("prof", Role::Faculty)).map_err(e)?;
    for s in ["s0", "s1"] {
        svc.register_user(user(s, Role::Student)).map_err(e)?;
    }
    let prof = svc.login("prof", PASSWORD).map_err(e)?;
    let s0 = svc.login("s0", PASSWORD).map_err(e)?;
    let s1 = svc.login("s1", PASSWORD).map_err(e)?;
    states.push((*svc.view()).clone());
    let lab = svc.create_lab(&prof, lab_request(start + chrono::Duration::days(7))).map_err(e)?;
    svc.allocate(&prof, &lab.lab_id, &["s0".into(), "s1".into()]).map_err(e)?;
    states.push((*svc.view()).clone());
    svc.activate(&prof, &lab.lab_id).map_err(e)?;
    let alloc_of = |uid: &str| {
        svc.view().allocations.values().find(|a| a.student_id == uid).map(|a| a.allocation_id.clone()).unwrap()
    };
    let receipt = svc.submit_code(&s0, &alloc_of(&s0.user_id), CODE, "python").map_err(e)?;
    states.push((*svc.view()).clone());
    let session = receipt.viva.session_id.clone();
    let rubrics: Vec<String> =
        svc.view().sessions[&session].questions.iter().map(|q| q.rubric_answer.clone()).collect();
    for (i, r) in rubrics.iter().enumerate() {
        svc.answer_viva(&s0, &session, i, r).map_err(e)?;
    }
    svc.override_score(&prof, &receipt.submission.submission_id, 92.0, "review").map_err(e)?;
    states.push((*svc.view()).clone());
    svc.submit_code(&s1, &alloc_of(&s1.user_id), "x = 1", "python").map_err(e)?;
    clock.advance(chrono::Duration::minutes(30));
    svc.sweep_expired().map_err(e)?;
    states.push((*svc.view()).clone());
    Ok(states)
}

fn crash_replay() -> Check {
    let live = tempfile::tempdir().map_err(|e| e.to_string())?;
    let states = scripted_states(live.path())?;
    let lines: Vec<String> =
        fs::read_to_string(live.path().join(EVENTS_FILE)).unwrap().lines().map(str::to_string).collect();
    ensure!(lines.len() as u64 == states.last().unwrap().last_seq, "log length differs from last seq");
    // after allocation, after the first submission, after the override
    for (n, expected) in states[1..4].iter().enumerate() {
        let k = expected.last_seq as usize;
        let crash = tempfile::tempdir().unwrap();
        let mut log = lines[..k].join("\n");
        log.push('\n');
        if n == 1 {
            // torn record from a crash mid-append
            log.push_str(&lines[k][..lines[k].len() / 2]);
        }
        fs::write(crash.path().join(EVENTS_FILE), log).unwrap();
        let (_, replayed) = FileStore::open(crash.path(), 0, false).map_err(|e| e.to_string())?;
        ensure!(&replayed == expected, "replay up to seq {k} differs from the live state");
    }
    let (_, replayed) = FileStore::open(live.path(), 0, false).map_err(|e| e.to_string())?;
    ensure!(&replayed == states.last().unwrap(), "full replay differs from the live state");
    Ok(())
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(store: &Path, model: &Path) -> Result<Server, String> {
    let mut child = Command::new(BIN)
        .args(["serve", "--addr", "127.0.0.1:0", "--data", path_str(store), "--model", path_str(model)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    let base = line.trim().strip_prefix("listening on ").ok_or(format!("unexpected banner {line:?}"))?.to_string();
    Ok(Server { child, base })
}

fn add_user(store: &Path, name: &str, role: &str) -> Check {
    let o = Command::new(BIN)
        .args(["add-user", "--data", path_str(store), "--username", name, "--role", role, "--section", "A"])
        .env("LABASSESS_PASSWORD", PASSWORD)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "add-user {name}: {}", String::from_utf8_lossy(&o.stderr));
    Ok(())
}

struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { agent, base: base.to_string() }
    }

    fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, Value) {
        let url = format!("{}{}", self.base, path);
        let auth = token.map(|t| format!("Bearer {t}")).unwrap_or_default();
        let resp = match method {
            "GET" => self.agent.get(&url).header("Authorization", &auth).call(),
            "DELETE" => self.agent.delete(&url).header("Authorization", &auth).call(),
            _ => self.agent.post(&url).header("Authorization", &auth).send_json(body.unwrap_or(json!({}))),
        };
        match resp {
            Ok(mut r) => {
                let status = r.status().as_u16();
                let text = r.body_mut().read_to_string().unwrap_or_default();
                (status, serde_json::from_str(&text).unwrap_or(Value::Null))
            }
            Err(e) => (0, json!({ "transport": e.to_string() })),
        }
    }

    fn login(&self, name: &str) -> Result<String, String> {
        let (st, body) = self.call("POST", "/login", None, Some(json!({"username": name, "password": PASSWORD})));
        ensure!(st == 200, "login {name}: {st} {body}");
        Ok(body["token"].as_str().unwrap_or_default().to_string())
    }
}

fn service_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let data = write_jsonl(dir.path(), "train.jsonl", &synthetic_dataset(80, 9));
    let models = dir.path().join("model");
    let o = labassess(&["--out", path_str(&models), "train", "--data", path_str(&data), "--trees", "40", "--folds", "3"]);
    ensure!(o.status.success(), "train: {}", String::from_utf8_lossy(&o.stderr));
    let model = models.join("model.json");
    add_user(&store, "prof", "faculty")?;
    add_user(&store, "student00", "student")?;
    add_user(&store, "student01", "student")?;

    let server = start_server(&store, &model)?;
    let c = Client::new(&server.base);
    ensure!(c.call("GET", "/healthz", None, None).1["grading_available"] == true, "grading not available");
    let fac = c.login("prof")?;
    let stu = c.login("student00")?;

    // faculty: create, allocate, activate
    let deadline = Utc::now() + chrono::Duration::days(7);
    let (st, lab) = c.call("POST", "/labs", Some(&fac), Some(serde_json::to_value(lab_request(deadline)).unwrap()));
    ensure!(st == 200, "create lab: {st} {lab}");
    let lab_id = lab["lab_id"].as_str().unwrap_or_default().to_string();
    let roster = json!({"roster": ["student00", "student01"]});
    let (st, body) = c.call("POST", &format!("/labs/{lab_id}/allocate"), Some(&fac), Some(roster));
    ensure!(st == 200 && body["count"] == 2, "allocate: {st} {body}");
    let (st, body) = c.call("POST", &format!("/labs/{lab_id}/activate"), Some(&fac), None);
    ensure!(st == 200, "activate: {st} {body}");

    // student: submit, answer the viva
    let (_, mine) = c.call("GET", "/me/labs", Some(&stu), None);
    let alloc = mine[0]["allocation"]["allocation_id"].as_str().unwrap_or_default().to_string();
    ensure!(mine[0]["allocation"].get("rubric_answer").is_none(), "rubric leaked to the student");
    let (st, receipt) = c.call(
        "POST",
        &format!("/allocations/{alloc}/submissions"),
        Some(&stu),
        Some(json!({"code_text": CODE, "language_tag": "python"})),
    );
    ensure!(st == 200, "submit: {st} {receipt}");
    let ai = receipt["submission"]["ai_score"].as_f64().ok_or("no ai_score")?;
    let sub_id = receipt["submission"]["submission_id"].as_str().unwrap_or_default().to_string();
    let session = receipt["viva"]["session_id"].as_str().unwrap_or_default().to_string();
    let n_questions = receipt["viva"]["questions"].as_array().map_or(0, Vec::len);
    ensure!(n_questions > 0, "viva has no questions: {receipt}");
    let mut progress = Value::Null;
    for i in 0..n_questions {
        let answer = "Fit an svm with an rbf kernel, tune C and gamma by cross validation, then score on held out data";
        let (st, p) = c.call(
            "POST",
            &format!("/viva/{session}/answers"),
            Some(&stu),
            Some(json!({"question_index": i, "answer_text": answer})),
        );
        ensure!(st == 200, "answer {i}: {st} {p}");
        progress = p;
    }
    ensure!(progress["state"] == "Completed", "viva not completed: {progress}");
    let viva = progress["viva_score"].as_f64().ok_or("no viva_score")?;
    let mixed = progress["final_score"].as_f64().ok_or("no final_score")?;
    ensure!((mixed - (0.7 * ai + 0.3 * viva)).abs() < 1e-9, "final {mixed} is not the weighted mix of {ai} and {viva}");

    // faculty: report, then override takes precedence
    let (st, report) = c.call("GET", &format!("/labs/{lab_id}/report"), Some(&fac), None);
    ensure!(st == 200 && report["ranking"][0]["final_score"] == mixed, "report before override: {st} {report}");
    let (st, over) = c.call(
        "POST",
        &format!("/submissions/{sub_id}/override"),
        Some(&fac),
        Some(json!({"override": 92.0, "reason": "manual review"})),
    );
    ensure!(st == 200 && over["final_score"] == 92.0, "override: {st} {over}");
    let (_, export) = c.call("GET", &format!("/submissions/{sub_id}/export"), Some(&stu), None);
    ensure!(export["final_score"] == 92.0, "export ignores the override: {export}");
    let (_, report) = c.call("GET", &format!("/labs/{lab_id}/report"), Some(&fac), None);
    ensure!(report["ranking"][0]["final_score"] == 92.0, "report ignores the override: {report}");

    // deny-by-default walk over every route and caller
    let callers: [(Option<Role>, Option<&str>); 4] =
        [(None, None), (None, Some("forged-token")), (Some(Role::Faculty), Some(&fac)), (Some(Role::Student), Some(&stu))];
    for route in ROUTES {
        let path = route.path.replace("{id}", "x-1");
        for (role, token) in &callers {
            let (status, body) = c.call(route.method, &path, *token, None);
            let allowed = match (route.access, role) {
                (Access::Public, _) => true,
                (Access::Roles(rs), Some(r)) => rs.contains(r),
                (Access::Roles(_), None) => false,
            };
            if allowed {
                ensure!(
                    status != 0 && (status != 401 && status != 403 || body["code"] == "bad_credentials"),
                    "{} {} as {role:?} refused: {status} {body}",
                    route.method,
                    route.path
                );
            } else {
                let expected = if role.is_none() { 401 } else { 403 };
                ensure!(status == expected, "{} {} as {role:?}: {status} {body}", route.method, route.path);
            }
        }
    }

    // hard kill, restart on the same directory: the report is unchanged
    drop(server);
    let server = start_server(&store, &model)?;
    let c = Client::new(&server.base);
    let fac = c.login("prof")?;
    let (_, after) = c.call("GET", &format!("/labs/{lab_id}/report"), Some(&fac), None);
    ensure!(after == report, "report changed across a crash and restart");

    crash_replay()
}

// ---------------------------------------------------------------------------
// 7. determinism of the command line artifacts

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_jsonl(dir.path(), "d.jsonl", &synthetic_dataset(120, 42));
    let mut runs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let o = labassess(&["--seed", "42", "--out", path_str(&out), "train", "--data", path_str(&data), "--trees", "100"]);
        ensure!(o.status.success(), "train: {}", String::from_utf8_lossy(&o.stderr));
        let o = labassess(&["--seed", "42", "--out", path_str(&out), "generate", "--keywords", "svm,pca", "--count", "25"]);
        ensure!(o.status.success(), "generate: {}", String::from_utf8_lossy(&o.stderr));
        runs.push(artifacts(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure!(names.contains(&"model.json") && names.contains(&"questions.json"), "missing artifacts: {names:?}");
    for ((name, a), (_, b)) in runs[0].iter().zip(&runs[1]) {
        ensure!(a == b, "{name} differs between runs");
    }
    ensure!(runs[0].len() == runs[1].len(), "different artifact sets");

    // a different seed must change the model, or the seed is not wired through
    let out = dir.path().join("other");
    let o = labassess(&["--seed", "43", "--out", path_str(&out), "train", "--data", path_str(&data), "--trees", "100"]);
    ensure!(o.status.success(), "train seed 43");
    let model_of = |d: &Path| serde_json::from_slice::<Value>(&fs::read(d.join("model.json")).unwrap()).unwrap()["report"].clone();
    ensure!(model_of(&out) != model_of(&dir.path().join("run0")), "seed has no effect on the model");
    Ok(())
}

// ---------------------------------------------------------------------------

/// Runs without the libtest harness so the lines are always printed.
fn main() {
    let criteria: [Criterion; 7] = [
        ("statistics fixtures", stats_fixtures, Duration::from_secs(1)),
        ("boosted trees vs exhaustive oracle", gbt_oracle, Duration::from_secs(30)),
        ("cross-validation on a noisy linear target", cross_validation, Duration::from_secs(120)),
        ("near-duplicate filter properties", dedup_property, Duration::from_secs(60)),
        ("allocation uniqueness for 50 students", allocation_uniqueness, Duration::from_secs(60)),
        ("service end to end over HTTP", service_end_to_end, Duration::from_secs(120)),
        ("deterministic command line artifacts", determinism, Duration::from_secs(300)),
    ];
    let total = criteria.len();
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = t.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= budget {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match &outcome {
            Ok(()) => println!("[{}] PASS  {name}  ({elapsed:.2?} / {budget:?})", i + 1),
            Err(why) => {
                println!("[{}] FAIL  {name}  ({elapsed:.2?} / {budget:?}): {why}", i + 1);
                failed.push(name);
            }
        }
    }
    println!("{} of {total} criteria passed", total - failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
