mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::*;
use labassess_core::genpipe::{CandidateRequest, GenError, QuestionGenerator};
use labassess_core::textsim::{cosine, Vectorizer};
use labassess_core::{Difficulty, GeneratorBackend};
use labassess_svc::clients::{ExternalEmbedder, ExternalGenerator};
use labassess_svc::{LabService, ManualClock};
use serde_json::Value;

/// Minimal HTTP/1.1 server: answers every request with `reply(body)`.
fn stub<F>(reply: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&Value) -> String + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let l = line.to_ascii_lowercase();
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let out = reply(&req);
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                out.len(),
                out
            );
        }
    });
    (format!("http://{addr}"), hits)
}

fn kws() -> Vec<String> {
    vec!["svm".to_string()]
}

fn request(kws: &[String]) -> CandidateRequest<'_> {
    CandidateRequest { keywords: kws, difficulty: Difficulty::Medium, seed: 42, attempt_index: 7, no_repeat: &[] }
}

#[test]
fn generator_parses_sectioned_text_and_sends_the_request_fields() {
    let (base, hits) = stub(|req| {
        assert_eq!(req["keywords"][0], "svm");
        assert_eq!(req["difficulty"], "Medium");
        let i = req["attempt_index"].as_u64().unwrap();
        serde_json::json!({ "text": format!("Question: Train an svm with kernel number {i}.\nAnswer: Fit SVC.") })
            .to_string()
    });
    let g = ExternalGenerator::new(&base, Duration::from_secs(5), 0);
    assert_eq!(g.backend(), GeneratorBackend::External);
    let k = kws();
    let (q, a) = g.generate(&request(&k)).unwrap();
    assert_eq!(q, "Train an svm with kernel number 7.");
    assert_eq!(a, "Fit SVC.");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn generator_accepts_structured_replies_and_tolerates_junk() {
    let (base, _) = stub(|_| r#"{"question": " Q about svm ", "answer": "A"}"#.to_string());
    let k = kws();
    let g = ExternalGenerator::new(&base, Duration::from_secs(5), 0);
    assert_eq!(g.generate(&request(&k)).unwrap(), ("Q about svm".to_string(), "A".to_string()));

    let (base, _) = stub(|_| "not json".to_string());
    let g = ExternalGenerator::new(&base, Duration::from_secs(5), 0);
    assert_eq!(g.generate(&request(&k)).unwrap(), (String::new(), String::new()));
}

#[test]
fn unreachable_generator_is_backend_unavailable() {
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let g = ExternalGenerator::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2), 2);
    let k = kws();
    assert!(matches!(g.generate(&request(&k)), Err(GenError::BackendUnavailable(_))));
}

#[test]
fn service_allocates_through_the_external_backend() {
    let (base, hits) = stub(|req| {
        let i = req["attempt_index"].as_u64().unwrap();
        let topics = ["margins", "kernels", "slack", "scaling"];
        serde_json::json!({
            "question": format!("Explain svm {} with example {i}", topics[i as usize % 4]),
            "answer": "rubric"
        })
        .to_string()
    });
    let clock = Arc::new(ManualClock::new(start()));
    let svc = LabService::in_memory(config(), clock.clone(), None)
        .with_generator(Arc::new(ExternalGenerator::new(&base, Duration::from_secs(5), 0)));
    let f = fixture_with(svc, clock, 2);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["svm"], "A")).unwrap();
    let summary = f.svc.allocate(&f.faculty, &lab.lab_id, &f.roster()).unwrap();
    assert_eq!(summary.count, 2);
    assert!(hits.load(Ordering::SeqCst) >= 2);
    assert!(f.svc.view().allocations.values().all(|a| a.generator_backend == GeneratorBackend::External));
}

#[test]
fn embedder_builds_a_lookup_vectorizer() {
    let (base, _) = stub(|req| {
        let n = req["texts"].as_array().unwrap().len();
        let vectors: Vec<Vec<f32>> = (0..n).map(|i| if i == 0 { vec![1.0, 0.0] } else { vec![1.0, 1.0] }).collect();
        serde_json::json!({ "vectors": vectors }).to_string()
    });
    let e = ExternalEmbedder::new(&base, Duration::from_secs(5));
    let texts = vec!["alpha".to_string(), "beta".to_string()];
    let vz = e.embed_all(&texts).unwrap();
    let sim = cosine(&vz.vectorize("alpha"), &vz.vectorize("beta"));
    assert!((sim - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6, "{sim}");

    let (base, _) = stub(|_| r#"{"vectors": []}"#.to_string());
    let e = ExternalEmbedder::new(&base, Duration::from_secs(5));
    assert!(e.embed_all(&texts).is_err());
}
