#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const BIN: &str = env!("CARGO_BIN_EXE_labassess");

pub fn labassess(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("LABASSESS_SEED").output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TOPICS: [&str; 6] = ["svm", "decision tree", "k-means", "pca", "lstm", "random forest"];
const WORDS: [&str; 24] = [
    "fit", "predict", "model", "train", "test", "split", "score", "data", "features", "labels", "scale", "kernel",
    "depth", "cluster", "loss", "epoch", "layer", "accuracy", "matrix", "vector", "sample", "tune", "grid", "plot",
];

/// A synthetic dataset of `n` records whose faculty mark grows with the
/// length and keyword coverage of the answer.
pub fn synthetic_dataset(n: usize, seed: u64) -> Vec<serde_json::Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cats = ["Easy", "Medium", "Hard"];
    (0..n)
        .map(|i| {
            let topic = TOPICS.choose(&mut rng).unwrap();
            let q_len = rng.random_range(6..12);
            let question: Vec<&str> = (0..q_len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            let a_len = rng.random_range(3..40);
            let mut answer: Vec<String> = (0..a_len).map(|_| WORDS.choose(&mut rng).unwrap().to_string()).collect();
            answer.insert(0, topic.to_string());
            let faculty = (30.0 + a_len as f64 * 1.5 + rng.random_range(-3.0..3.0)).clamp(0.0, 100.0);
            let ai = (faculty + rng.random_range(-6.0..6.0)).clamp(0.0, 100.0);
            json!({
                "Id": format!("r{i:04}"),
                "question": format!("Implement {topic} and {}", question.join(" ")),
                "answer": answer.join(" "),
                "category": cats[i % 3],
                "marksAI": (ai * 10.0_f64).round() / 10.0,
                "marksFaculty": (faculty * 10.0_f64).round() / 10.0,
            })
        })
        .collect()
}

pub fn write_jsonl(dir: &Path, name: &str, rows: &[serde_json::Value]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(&path, text).unwrap();
    path
}
