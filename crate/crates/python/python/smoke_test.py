"""Smoke test for the labassess extension module.

Build and install first, e.g.:
    maturin develop -m crates/python/Cargo.toml
or
    maturin build -m crates/python/Cargo.toml && pip install target/wheels/labassess-*.whl
"""

import json
import math
import os
import random
import sys
import tempfile

import labassess as la


def close(a, b, tol=1e-9):
    return abs(a - b) < tol


def check_statistics():
    assert close(la.pearson([10, 20, 30], [3, 1, 2]), -0.5)
    assert close(la.spearman([10, 20, 30, 40], [1, 3, 2, 4]), 0.8)
    assert close(la.cohen_kappa([5, 25, 45, 65, 85], [25, 45, 65, 85, 5]), -0.25)
    report = la.agreement_report([(70, 72), (80, 79), (55, 60), (90, 88)])
    assert report["n_pairs"] == 4 and report["pearson_r"] > 0.9
    try:
        la.pearson([1.0], [1.0, 2.0])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch accepted")


def check_text():
    assert close(la.similarity("train an svm", "train an svm"), 1.0)
    kept, dropped = la.dedup_filter(
        [("a", "explain the svm kernel trick"), ("b", "explain the svm kernel trick"), ("c", "cluster with k-means")]
    )
    assert kept == ["a", "c"] and dropped == [("b", "a")], (kept, dropped)
    batch = la.generate_questions(["svm", "pca"], "Hard", 8, seed=42)
    assert len(batch) == 8
    assert batch == la.generate_questions(["svm", "pca"], "Hard", 8, seed=42)
    assert all(q["rubric_answer"] for q in batch)


def check_dataset():
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "data.jsonl")
        with open(path, "w") as f:
            f.write(json.dumps({"Id": "1", "question": "Fit a tree", "answer": "DecisionTreeClassifier().fit(X, y)",
                                "category": "Easy", "marksAI": 80, "marksFaculty": 85}) + "\n")
            f.write("{broken\n")
        records, rejected = la.read_dataset(path)
        assert [r["Id"] for r in records] == ["1"]
        assert rejected[0]["line"] == 2


def check_model():
    rng = random.Random(42)
    x = [[rng.random() for _ in range(3)] for _ in range(120)]
    y = [20 + 50 * r[0] + 20 * r[1] for r in x]
    m = la.GbtModel.train(x, y, n_trees=80, seed=42)
    assert m.n_trees == 80
    assert la.GbtModel.from_json(m.to_json()).to_json() == m.to_json()
    rmse = math.sqrt(sum((m.predict(r) - t) ** 2 for r, t in zip(x, y)) / len(y))
    assert rmse < 5, rmse
    cv = la.cross_validate(x, y, folds=3, n_trees=60, seed=42)
    assert len(cv["predictions"]) == 120 and cv["pooled_r2"] > 0.7, cv["pooled_r2"]


def check_service():
    svc = la.LabService(start="2026-01-05T09:00:00Z", password_iterations=1000)
    svc.register_user("prof", "pw", "faculty")
    svc.register_user("stu", "pw", "student")
    fac, stu = svc.login("prof", "pw"), svc.login("stu", "pw")
    lab = svc.create_lab(fac, {
        "title": "Classifiers", "section": "A", "topic_keywords": ["svm"], "difficulty": "Medium",
        "viva_duration_minutes": 15, "mode": "NonProctored", "description": "d", "instructions": "i",
        "deadline": "2026-01-12T09:00:00Z",
    })
    assert svc.allocate(fac, lab["lab_id"], ["stu"])["count"] == 1
    svc.activate(fac, lab["lab_id"])
    alloc = svc.my_labs(stu)[0]["allocation"]["allocation_id"]
    try:
        svc.submit_code(stu, alloc, "x = 1")
    except la.ServiceError as e:
        assert e.args[0] == "grading_unavailable", e.args
    else:
        raise AssertionError("grading without a model")
    try:
        svc.create_lab(stu, {})
    except (la.ServiceError, ValueError):
        pass
    else:
        raise AssertionError("student created a lab")
    assert svc.healthz()["grading_available"] is False


def main():
    for check in (check_statistics, check_text, check_dataset, check_model, check_service):
        check()
        print(f"ok  {check.__name__}")
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
