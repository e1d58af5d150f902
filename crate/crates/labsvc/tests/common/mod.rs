#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use labassess_core::evaluator::{GbtModel, FEATURE_COUNT, FEATURE_SCHEMA_VERSION};
use labassess_core::{Difficulty, LabMode, Role};
use labassess_svc::{LabService, ManualClock, NewLab, NewUser, ServiceConfig, SessionToken};

pub const PASSWORD: &str = "correct horse";

pub fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap()
}

pub fn config() -> ServiceConfig {
    ServiceConfig { password_iterations: 1_000, ..ServiceConfig::default() }
}

/// A model that scores every submission's correctness at `value`.
pub fn constant_model(value: f64) -> GbtModel {
    GbtModel::constant(value, FEATURE_COUNT, FEATURE_SCHEMA_VERSION)
}

pub struct Fixture {
    pub svc: Arc<LabService>,
    pub clock: Arc<ManualClock>,
    pub faculty: SessionToken,
    pub students: Vec<SessionToken>,
}

pub fn register(svc: &LabService, name: &str, role: Role) -> SessionToken {
    svc.register_user(NewUser {
        username: name.into(),
        password: PASSWORD.into(),
        role,
        display_name: String::new(),
        section: None,
    })
    .unwrap();
    svc.login(name, PASSWORD).unwrap()
}

pub fn fixture_with(svc: LabService, clock: Arc<ManualClock>, n_students: usize) -> Fixture {
    let svc = Arc::new(svc);
    let faculty = register(&svc, "prof", Role::Faculty);
    let students = (0..n_students).map(|i| register(&svc, &format!("student{i:02}"), Role::Student)).collect();
    Fixture { svc, clock, faculty, students }
}

pub fn fixture(n_students: usize) -> Fixture {
    let clock = Arc::new(ManualClock::new(start()));
    let svc = LabService::in_memory(config(), clock.clone(), Some(constant_model(78.0)));
    fixture_with(svc, clock, n_students)
}

pub fn new_lab(keywords: &[&str], section: &str) -> NewLab {
    NewLab {
        title: "Classifiers lab".into(),
        section: section.into(),
        topic_keywords: keywords.iter().map(|k| k.to_string()).collect(),
        difficulty: Difficulty::Medium,
        viva_duration_minutes: 15,
        mode: LabMode::NonProctored,
        description: "Build and evaluate a classifier.".into(),
        instructions: "Submit Python code.".into(),
        deadline: start() + Duration::days(7),
        viva_question_count: None,
        viva_weight: None,
        grade_weights: None,
    }
}

impl Fixture {
    pub fn roster(&self) -> Vec<String> {
        self.students.iter().map(|s| s.user_id.clone()).collect()
    }

    /// Creates, allocates to every student and activates a lab.
    pub fn active_lab(&self, keywords: &[&str], section: &str) -> String {
        let lab = self.svc.create_lab(&self.faculty, new_lab(keywords, section)).unwrap();
        self.svc.allocate(&self.faculty, &lab.lab_id, &self.roster()).unwrap();
        self.svc.activate(&self.faculty, &lab.lab_id).unwrap();
        lab.lab_id
    }

    pub fn allocation_of(&self, lab_id: &str, student: &SessionToken) -> String {
        let st = self.svc.view();
        st.allocations
            .values()
            .find(|a| a.lab_id == lab_id && a.student_id == student.user_id)
            .unwrap()
            .allocation_id
            .clone()
    }

    /// Rubric answers of a viva session, read from the service state.
    pub fn rubrics(&self, session_id: &str) -> Vec<String> {
        self.svc.view().sessions[session_id].questions.iter().map(|q| q.rubric_answer.clone()).collect()
    }
}

pub const SAMPLE_CODE: &str = "\
# train a support vector machine on the iris data
from sklearn import datasets, svm

def train(kernel):
    data = datasets.load_iris()
    model = svm.SVC(kernel=kernel)
    # fit on all rows
    model.fit(data.data, data.target)
    return model

for k in ['linear', 'rbf']:
    if k:
        print(train(k).score(datasets.load_iris().data, datasets.load_iris().target))
";
