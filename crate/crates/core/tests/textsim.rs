use labassess_core::textsim::*;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 800 random questions plus 200 near-duplicates, each a copy of an earlier
/// question with one word replaced, shuffled into the stream after it.
fn planted_corpus(seed: u64) -> (Vec<(String, String)>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..3000)
        .map(|_| (0..rng.random_range(3..9)).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
        .collect();
    let mut base: Vec<Vec<String>> = (0..800)
        .map(|_| (0..rng.random_range(14..22)).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect())
        .collect();
    let mut questions: Vec<(String, String)> =
        base.iter().enumerate().map(|(i, w)| (format!("q{i:04}"), w.join(" "))).collect();
    let mut planted = Vec::new();
    for j in 0..200 {
        let src = rng.random_range(0..800);
        let words = &mut base[src];
        let pos = rng.random_range(0..words.len());
        let mut copy = words.clone();
        copy[pos] = vocab.choose(&mut rng).unwrap().clone();
        let id = format!("d{j:03}");
        planted.push(id.clone());
        // insert somewhere after the source so the source is seen first
        let src_pos = questions.iter().position(|(qid, _)| *qid == format!("q{src:04}")).unwrap();
        let at = rng.random_range(src_pos + 1..=questions.len());
        questions.insert(at, (id, copy.join(" ")));
    }
    (questions, planted)
}

/// Straightforward greedy filter used as the reference.
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

#[test]
fn planted_duplicates_are_filtered() {
    let (questions, planted) = planted_corpus(42);
    assert_eq!(questions.len(), 1000);
    let vz = TfIdfVectorizer::fit(questions.iter().map(|(_, t)| t.as_str()));
    let out = dedup_filter(&questions, DEFAULT_DEDUP_THRESHOLD, &vz).unwrap();
    assert_eq!(out.kept.len() + out.dropped.len(), 1000);
    for d in &planted {
        assert!(out.dropped.iter().any(|(id, _)| id == d), "planted {d} kept");
    }

    // kept set pairwise below threshold, by brute force
    let text_of = |id: &str| questions.iter().find(|(q, _)| q == id).unwrap().1.as_str();
    let kept_vecs: Vec<TextVector> = out.kept.iter().map(|id| vz.vectorize(text_of(id))).collect();
    for i in 0..kept_vecs.len() {
        for j in i + 1..kept_vecs.len() {
            assert!(cosine(&kept_vecs[i], &kept_vecs[j]) < DEFAULT_DEDUP_THRESHOLD);
        }
    }

    // idempotent
    let kept_q: Vec<(String, String)> = out.kept.iter().map(|id| (id.clone(), text_of(id).to_string())).collect();
    let again = dedup_filter(&kept_q, DEFAULT_DEDUP_THRESHOLD, &vz).unwrap();
    assert_eq!(again.kept, out.kept);
    assert!(again.dropped.is_empty());

    // equals the reference greedy pass
    assert_eq!(out.kept, greedy_oracle(&questions, DEFAULT_DEDUP_THRESHOLD, &vz));
}

#[test]
fn rejects_bad_threshold_and_duplicate_ids() {
    let q = vec![("a".to_string(), "x".to_string()), ("a".to_string(), "y".to_string())];
    let vz = TfIdfVectorizer::uniform();
    assert!(matches!(dedup_filter(&q, 0.0, &vz), Err(TextSimError::BadThreshold(_))));
    assert!(matches!(dedup_filter(&q, 1.5, &vz), Err(TextSimError::BadThreshold(_))));
    assert!(matches!(dedup_filter(&q, 0.9, &vz), Err(TextSimError::DuplicateId(_))));
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["knn", "svm", "tree", "train", "model", "data", "loss", "depth", "Split", "the"]), 0..12)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cosine_is_bounded_symmetric_and_reflexive(a in sentence(), b in sentence()) {
        let vz = TfIdfVectorizer::fit([a.as_str(), b.as_str()]);
        let (va, vb) = (vz.vectorize(&a), vz.vectorize(&b));
        let ab = cosine(&va, &vb);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, cosine(&vb, &va));
        if !va.is_zero() {
            prop_assert!((cosine(&va, &va) - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(ab, 0.0);
        }
    }

    #[test]
    fn dedup_kept_set_is_a_fixed_point(texts in prop::collection::vec(sentence(), 1..30), t in 0.3f64..=1.0) {
        let q: Vec<(String, String)> = texts.into_iter().enumerate().map(|(i, s)| (format!("q{i}"), s)).collect();
        let vz = TfIdfVectorizer::fit(q.iter().map(|(_, s)| s.as_str()));
        let out = dedup_filter(&q, t, &vz).unwrap();
        prop_assert_eq!(&out.kept, &greedy_oracle(&q, t, &vz));
        let kept: Vec<(String, String)> = q.iter().filter(|(id, _)| out.kept.contains(id)).cloned().collect();
        prop_assert_eq!(dedup_filter(&kept, t, &vz).unwrap().kept, out.kept);
    }
}

#[test]
fn similarity_report_ignores_order() {
    let scores = vec![0.1, 0.95, 0.33, 0.5, 1.0, 0.0, 0.72];
    let mut rev = scores.clone();
    rev.reverse();
    let a = SimilarityReport::from_scores(scores);
    let b = SimilarityReport::from_scores(rev);
    assert_eq!(a, b);
    assert_eq!(a.pair_count, 7);
    assert_eq!(a.histogram.iter().sum::<usize>(), 7);
}
