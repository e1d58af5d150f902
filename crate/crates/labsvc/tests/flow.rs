mod common;

use std::collections::BTreeMap;

use chrono::Duration;
use common::*;
use labassess_core::domain::compose_final;
use labassess_core::evaluator::{feature_vectorizer, score_viva_answer};
use labassess_core::{LabState, Role};
use labassess_svc::state::AuditAction;
use labassess_svc::{ReportScope, ServiceError, VivaState};

#[test]
fn login_issues_role_tokens_and_rejects_bad_credentials() {
    let f = fixture(1);
    assert_eq!(f.faculty.role, Role::Faculty);
    assert_eq!(f.students[0].role, Role::Student);
    assert_eq!(f.svc.login("prof", "wrong"), Err(ServiceError::BadCredentials));
    assert_eq!(f.svc.login("nobody", PASSWORD), Err(ServiceError::BadCredentials));
    assert_eq!(f.svc.authenticate(&f.faculty.token).unwrap().user_id, f.faculty.user_id);
    f.clock.advance(Duration::days(1));
    assert_eq!(f.svc.authenticate(&f.faculty.token), Err(ServiceError::Unauthorized));
}

#[test]
fn create_lab_validates_and_checks_role() {
    let f = fixture(1);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["svm"], "A")).unwrap();
    assert_eq!(lab.state, LabState::Draft);
    assert_eq!(lab.lab_id, "lab-0001");
    assert!(matches!(
        f.svc.create_lab(&f.students[0], new_lab(&["svm"], "A")),
        Err(ServiceError::Forbidden { .. })
    ));
    match f.svc.create_lab(&f.faculty, new_lab(&[], "A")) {
        Err(ServiceError::ValidationFailed(fields)) => assert_eq!(fields, vec!["topic_keywords".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn allocate_ten_students_then_conflict_then_deallocate() {
    let f = fixture(10);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["decision tree"], "A")).unwrap();
    let summary = f.svc.allocate(&f.faculty, &lab.lab_id, &f.roster()).unwrap();
    assert_eq!(summary.count, 10);
    assert_eq!(summary.students.len(), 10);
    let questions: std::collections::BTreeSet<String> =
        f.svc.view().allocations.values().map(|a| a.question_text.clone()).collect();
    assert_eq!(questions.len(), 10);

    assert!(matches!(f.svc.allocate(&f.faculty, &lab.lab_id, &f.roster()), Err(ServiceError::Conflict(_))));

    let back = f.svc.deallocate(&f.faculty, &lab.lab_id).unwrap();
    assert_eq!(back.state, LabState::Draft);
    assert_eq!(f.svc.view().allocations.len(), 0);
    // once active, allocations can no longer be removed
    f.svc.allocate(&f.faculty, &lab.lab_id, &f.roster()).unwrap();
    f.svc.activate(&f.faculty, &lab.lab_id).unwrap();
    assert!(matches!(f.svc.deallocate(&f.faculty, &lab.lab_id), Err(ServiceError::Conflict(_))));
}

#[test]
fn roster_must_name_registered_students() {
    let f = fixture(1);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["svm"], "A")).unwrap();
    let bad = vec![f.students[0].user_id.clone(), "ghost".into(), f.faculty.user_id.clone()];
    match f.svc.allocate(&f.faculty, &lab.lab_id, &bad) {
        Err(ServiceError::ValidationFailed(v)) => assert_eq!(v.len(), 2),
        other => panic!("{other:?}"),
    }
    // usernames work as well as ids
    assert_eq!(f.svc.allocate(&f.faculty, &lab.lab_id, &["student00".to_string()]).unwrap().count, 1);
}

#[test]
fn other_faculty_cannot_touch_a_lab() {
    let f = fixture(1);
    let other = register(&f.svc, "prof2", Role::Faculty);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["svm"], "A")).unwrap();
    assert!(matches!(f.svc.allocate(&other, &lab.lab_id, &f.roster()), Err(ServiceError::NotOwner(_))));
    assert!(matches!(f.svc.get_lab(&other, &lab.lab_id), Err(ServiceError::NotOwner(_))));
}

#[test]
fn full_happy_path_with_viva_and_override() {
    let f = fixture(2);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    let alloc = f.allocation_of(&lab_id, s0);

    // the student sees their question but no rubric
    let detail = f.svc.get_lab(s0, &lab_id).unwrap();
    assert!(detail.allocations.is_empty());
    assert_eq!(detail.my_allocation.as_ref().unwrap().allocation_id, alloc);

    let receipt = f.svc.submit_code(s0, &alloc, SAMPLE_CODE, "python").unwrap();
    let sub = &receipt.submission;
    let grade = sub.grade.clone().unwrap();
    assert_eq!(grade.correctness_score, 78.0);
    assert_eq!(sub.ai_score, Some(grade.final_score));
    assert_eq!(sub.final_score, Some(grade.final_score));
    assert_eq!(receipt.viva.state, VivaState::Open);
    assert_eq!(receipt.viva.questions.len(), 3);

    // answering with the rubric text scores 100 per question
    let session = receipt.viva.session_id.clone();
    let rubrics = f.rubrics(&session);
    for (i, r) in rubrics.iter().enumerate() {
        let p = f.svc.answer_viva(s0, &session, i, r).unwrap();
        assert!((p.score - 100.0).abs() < 1e-9, "{}", p.score);
    }
    let st = f.svc.view();
    let done = &st.submissions[&sub.submission_id];
    assert_eq!(st.sessions[&session].state, VivaState::Completed);
    assert!((done.viva_score.unwrap() - 100.0).abs() < 1e-9);
    let mixed = 0.7 * grade.final_score + 0.3 * done.viva_score.unwrap();
    assert!((done.final_score.unwrap() - mixed).abs() < 1e-9);

    // override wins over the weighted mix and is audited with the prior value
    let prior = done.final_score.unwrap();
    let over = f.svc.override_score(&f.faculty, &sub.submission_id, 92.0, "manual review").unwrap();
    assert_eq!(over.final_score, Some(92.0));
    let trail = f.svc.audit_trail(&f.faculty, &sub.submission_id).unwrap();
    assert_eq!(trail.len(), 1);
    match &trail[0].action {
        AuditAction::Override { prior_final, value, reason, .. } => {
            assert_eq!(*prior_final, Some(prior));
            assert_eq!(*value, 92.0);
            assert_eq!(reason, "manual review");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(
        f.svc.override_score(&f.faculty, &sub.submission_id, 150.0, "x"),
        Err(ServiceError::OutOfRange(150.0))
    );
    assert!(matches!(
        f.svc.override_score(s0, &sub.submission_id, 50.0, "x"),
        Err(ServiceError::Forbidden { .. })
    ));

    // the student can export their work
    let export = f.svc.export(s0, &sub.submission_id).unwrap();
    assert_eq!(export.final_score, Some(92.0));
    assert_eq!(export.code_text, SAMPLE_CODE);
    assert!(matches!(f.svc.export(&f.students[1], &sub.submission_id), Err(ServiceError::NotOwner(_))));
}

#[test]
fn viva_score_is_the_mean_of_oracle_scores() {
    let f = fixture(1);
    let lab_id = f.active_lab(&["decision tree"], "A");
    let s0 = &f.students[0];
    let receipt = f.svc.submit_code(s0, &f.allocation_of(&lab_id, s0), SAMPLE_CODE, "python").unwrap();
    let session = receipt.viva.session_id;
    let rubrics = f.rubrics(&session);
    let answers = [
        "a tree splits the data on features to reduce impurity at each node",
        "pruning limits depth so the model does not overfit",
        "i am not sure",
    ];
    let vz = feature_vectorizer();
    let expected: Vec<f64> =
        answers.iter().zip(&rubrics).map(|(a, r)| score_viva_answer(a, r, &vz).unwrap().score).collect();
    for (i, a) in answers.iter().enumerate() {
        f.svc.answer_viva(s0, &session, i, a).unwrap();
    }
    let mean = expected.iter().sum::<f64>() / 3.0;
    let got = f.svc.view().sessions[&session].viva_score.unwrap();
    assert!((got - mean).abs() < 1e-9, "{got} vs {mean}");
}

#[test]
fn viva_expiry_scores_unanswered_questions_zero() {
    let f = fixture(1);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    let receipt = f.svc.submit_code(s0, &f.allocation_of(&lab_id, s0), SAMPLE_CODE, "python").unwrap();
    let session = receipt.viva.session_id;
    let rubric0 = f.rubrics(&session)[0].clone();
    let first = f.svc.answer_viva(s0, &session, 0, &rubric0).unwrap();

    f.clock.advance(Duration::minutes(15));
    assert_eq!(f.svc.answer_viva(s0, &session, 1, "late"), Err(ServiceError::SessionExpired(session.clone())));
    let st = f.svc.view();
    let s = &st.sessions[&session];
    assert_eq!(s.state, VivaState::Expired);
    assert!((s.viva_score.unwrap() - first.score / 3.0).abs() < 1e-9);
    let sub = &st.submissions[&s.submission_id];
    let expected = compose_final(sub.ai_score, s.viva_score, None, 0.3).unwrap();
    assert_eq!(sub.final_score, Some(expected));
    // and it stays expired
    assert_eq!(f.svc.answer_viva(s0, &session, 2, "x"), Err(ServiceError::SessionExpired(session.clone())));
}

#[test]
fn sweep_expires_abandoned_sessions() {
    let f = fixture(1);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    let receipt = f.svc.submit_code(s0, &f.allocation_of(&lab_id, s0), SAMPLE_CODE, "python").unwrap();
    assert!(f.svc.sweep_expired().unwrap().is_empty());
    f.clock.advance(Duration::minutes(20));
    assert_eq!(f.svc.sweep_expired().unwrap(), vec![receipt.viva.session_id.clone()]);
    assert_eq!(f.svc.view().sessions[&receipt.viva.session_id].viva_score, Some(0.0));
}

#[test]
fn viva_answer_errors() {
    let f = fixture(2);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    let session = f.svc.submit_code(s0, &f.allocation_of(&lab_id, s0), SAMPLE_CODE, "python").unwrap().viva.session_id;
    assert_eq!(
        f.svc.answer_viva(s0, &session, 3, "x"),
        Err(ServiceError::IndexOutOfRange { index: 3, len: 3 })
    );
    f.svc.answer_viva(s0, &session, 0, "an answer").unwrap();
    assert_eq!(f.svc.answer_viva(s0, &session, 0, "again"), Err(ServiceError::AlreadyAnswered(0)));
    assert!(matches!(f.svc.answer_viva(&f.students[1], &session, 1, "x"), Err(ServiceError::NotYourAllocation(_))));
}

#[test]
fn submission_preconditions() {
    let f = fixture(2);
    let lab = f.svc.create_lab(&f.faculty, new_lab(&["svm"], "A")).unwrap();
    f.svc.allocate(&f.faculty, &lab.lab_id, &f.roster()).unwrap();
    let (s0, s1) = (&f.students[0], &f.students[1]);
    let a0 = f.allocation_of(&lab.lab_id, s0);

    assert_eq!(f.svc.submit_code(s0, &a0, "x = 1", "python"), Err(ServiceError::LabNotActive(lab.lab_id.clone())));
    f.svc.activate(&f.faculty, &lab.lab_id).unwrap();
    assert_eq!(f.svc.submit_code(s1, &a0, "x = 1", "python"), Err(ServiceError::NotYourAllocation(a0.clone())));
    assert!(matches!(f.svc.submit_code(&f.faculty, &a0, "x = 1", "python"), Err(ServiceError::Forbidden { .. })));

    // a second submission while the viva is open conflicts
    f.svc.submit_code(s0, &a0, "x = 1", "python").unwrap();
    assert!(matches!(f.svc.submit_code(s0, &a0, "x = 2", "python"), Err(ServiceError::Conflict(_))));

    f.clock.advance(Duration::days(8));
    let a1 = f.allocation_of(&lab.lab_id, s1);
    assert_eq!(f.svc.submit_code(s1, &a1, "x = 1", "python"), Err(ServiceError::DeadlinePassed));
}

#[test]
fn resubmission_after_viva_replaces_and_is_audited() {
    let f = fixture(1);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    let alloc = f.allocation_of(&lab_id, s0);
    let first = f.svc.submit_code(s0, &alloc, "x = 1", "python").unwrap();
    f.clock.advance(Duration::minutes(30));
    let second = f.svc.submit_code(s0, &alloc, SAMPLE_CODE, "python").unwrap();
    let st = f.svc.view();
    assert!(!st.submissions.contains_key(&first.submission.submission_id));
    assert_eq!(st.current_submission[&alloc], second.submission.submission_id);
    assert!(st.audit.iter().any(|e| matches!(&e.action,
        AuditAction::Resubmission { replaced_submission_id, .. } if *replaced_submission_id == first.submission.submission_id)));

    // marked work cannot be replaced
    f.svc.override_score(&f.faculty, &second.submission.submission_id, 80.0, "ok").unwrap();
    f.clock.advance(Duration::minutes(30));
    assert!(matches!(f.svc.submit_code(s0, &alloc, "y = 2", "python"), Err(ServiceError::Conflict(_))));
}

#[test]
fn missing_model_makes_grading_unavailable() {
    let clock = std::sync::Arc::new(labassess_svc::ManualClock::new(start()));
    let svc = labassess_svc::LabService::in_memory(config(), clock.clone(), None);
    let f = fixture_with(svc, clock, 1);
    let lab_id = f.active_lab(&["svm"], "A");
    let s0 = &f.students[0];
    assert_eq!(
        f.svc.submit_code(s0, &f.allocation_of(&lab_id, s0), "x = 1", "python"),
        Err(ServiceError::GradingUnavailable)
    );
    assert!(!f.svc.healthz().grading_available);
}

#[test]
fn class_report_agreement_plagiarism_and_ranking() {
    let f = fixture(5);
    let lab_id = f.active_lab(&["svm"], "A");
    let codes = [
        SAMPLE_CODE.to_string(),
        SAMPLE_CODE.to_string(),
        "def f(x):\n    return x * 2\n".to_string(),
        "import numpy as np\nprint(np.zeros(3))\n".to_string(),
        "# comment only\n".to_string(),
    ];
    let mut subs = Vec::new();
    for (s, code) in f.students.iter().zip(&codes) {
        subs.push(f.svc.submit_code(s, &f.allocation_of(&lab_id, s), code, "python").unwrap());
        f.clock.advance(Duration::minutes(1));
    }

    let report = f.svc.class_report(&f.faculty, &ReportScope::Lab(lab_id.clone())).unwrap();
    assert_eq!(report.agreement.status, "insufficient pairs");
    assert!(report.errors.is_none());
    assert_eq!(report.plagiarism_alerts.len(), 1);
    let alert = &report.plagiarism_alerts[0];
    assert!((alert.similarity - 1.0).abs() < 1e-12);
    assert_eq!(
        (alert.submission_a.as_str(), alert.submission_b.as_str()),
        (subs[0].submission.submission_id.as_str(), subs[1].submission.submission_id.as_str())
    );

    // overrides on three submissions create agreement pairs
    let marks = [70.0, 40.0, 55.0];
    for (s, m) in subs.iter().zip(marks) {
        f.svc.override_score(&f.faculty, &s.submission.submission_id, m, "reviewed").unwrap();
    }
    let report = f.svc.class_report(&f.faculty, &ReportScope::Lab(lab_id.clone())).unwrap();
    assert_eq!(report.agreement.status, "ok");
    assert_eq!(report.agreement.n_pairs, 3);
    assert_eq!(report.errors.as_ref().unwrap().n_rows, 3);
    assert_eq!(report.overrides.len(), 3);

    // ranking equals an independent sort: final descending, earlier completion first
    let st = f.svc.view();
    let mut oracle: Vec<(f64, chrono::DateTime<chrono::Utc>, String)> = st
        .submissions
        .values()
        .map(|s| (s.final_score.unwrap(), s.completed_at.unwrap_or(s.submitted_at), s.submission_id.clone()))
        .collect();
    oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let got: Vec<String> = report.ranking.iter().map(|r| r.submission_id.clone()).collect();
    assert_eq!(got, oracle.into_iter().map(|o| o.2).collect::<Vec<_>>());
    assert_eq!(report.ranking.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);

    assert!(matches!(f.svc.class_report(&f.students[0], &ReportScope::Lab(lab_id)), Err(ServiceError::Forbidden { .. })));
    assert!(matches!(
        f.svc.class_report(&f.faculty, &ReportScope::Lab("lab-9999".into())),
        Err(ServiceError::NotFound { .. })
    ));
}

#[test]
fn ranking_ties_break_on_earlier_completion() {
    let f = fixture(3);
    let lab_id = f.active_lab(&["svm"], "A");
    let mut ids = Vec::new();
    for s in &f.students {
        ids.push(f.svc.submit_code(s, &f.allocation_of(&lab_id, s), "x = 1", "python").unwrap().submission.submission_id);
    }
    // complete in reverse order, all with the same override
    for id in ids.iter().rev() {
        f.clock.advance(Duration::minutes(1));
        f.svc.override_score(&f.faculty, id, 75.0, "same").unwrap();
    }
    // completion time is the submission time here, since no viva finished
    let report = f.svc.class_report(&f.faculty, &ReportScope::Lab(lab_id)).unwrap();
    let got: Vec<&str> = report.ranking.iter().map(|r| r.submission_id.as_str()).collect();
    assert_eq!(got, ids.iter().map(String::as_str).collect::<Vec<_>>());
}

#[test]
fn progress_profiles() {
    let f = fixture(2);
    // a new student has an empty profile
    let empty = f.svc.my_progress(&f.students[0]).unwrap();
    assert_eq!(empty.labs_total, 0);
    assert!(empty.series.is_empty());

    let lab_a = f.active_lab(&["svm"], "A");
    let lab_b = f.active_lab(&["decision tree"], "B");
    let s0 = &f.students[0];
    let sub = f.svc.submit_code(s0, &f.allocation_of(&lab_a, s0), SAMPLE_CODE, "python").unwrap();
    f.svc.override_score(&f.faculty, &sub.submission.submission_id, 88.0, "good").unwrap();

    let p = f.svc.my_progress(s0).unwrap();
    assert_eq!(p.labs_total, 2);
    assert_eq!(p.labs_completed, 1);
    assert_eq!(p.series.len(), 1);
    assert_eq!(p.series[0].final_score, 88.0);
    assert_eq!(p.series[0].lab_id, lab_a);

    let fp = f.svc.my_progress(&f.faculty).unwrap();
    let expected: BTreeMap<String, u64> = [("A".to_string(), 1), ("B".to_string(), 1)].into_iter().collect();
    assert_eq!(fp.labs_conducted, expected);
    assert_eq!(fp.labs_total, 2);
    let _ = lab_b;
}

#[test]
fn section_report_spans_labs() {
    let f = fixture(1);
    let a1 = f.active_lab(&["svm"], "A");
    let a2 = f.active_lab(&["lstm"], "A");
    f.active_lab(&["decision tree"], "B");
    let r = f.svc.class_report(&f.faculty, &ReportScope::Section("A".into())).unwrap();
    assert_eq!(r.lab_ids, vec![a1, a2]);
    assert_eq!(r.n_allocations, 2);
    assert!(matches!(
        f.svc.class_report(&f.faculty, &ReportScope::Section("Z".into())),
        Err(ServiceError::NotFound { .. })
    ));
}
