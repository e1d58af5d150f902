//! Service operations. Every write runs under a single writer lock, appends its
//! events to the log, folds them into the state and then publishes an
//! immutable snapshot that readers use without taking the writer lock.

use std::io;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use labassess_core::analytics::{
    agreement_report, build_progress_profile, error_report, AgreementReport, ErrorReport, ErrorRow,
    ProgressProfile,
};
use labassess_core::domain::{check_mark, DEFAULT_VIVA_QUESTIONS, DEFAULT_VIVA_WEIGHT};
use labassess_core::evaluator::{
    feature_vectorizer, grade_submission, score_viva_answer, AggregationWeights, GbtModel, GradingConfig,
    GradingError,
};
use labassess_core::genpipe::{
    allocate_lab, bank_vectorizer, derive_seed, viva_questions, AllocationKnobs, QuestionGenerator,
    TemplateGenerator, DEFAULT_MAX_ATTEMPTS, DEFAULT_SEED, MAX_VIVA_QUESTIONS,
};
use labassess_core::textsim::{cosine, TfIdfVectorizer, Vectorizer, DEFAULT_DEDUP_THRESHOLD};
use labassess_core::{validate_transition, Allocation, Difficulty, Lab, LabMode, LabState, Role, Submission, User};
use serde::{Deserialize, Serialize};

use crate::auth::{dummy_verify, hash_password, verify_password, SessionTable, SessionToken, DEFAULT_ITERATIONS};
use crate::clock::Clock;
use crate::error::{ServiceError, ServiceResult};
use crate::state::{
    AuditAction, AuditEntry, DomainEvent, ServiceState, StoredEvent, VivaQuestion, VivaSession, VivaState,
};
use crate::store::{EventStore, FileStore};

pub const DEFAULT_PLAGIARISM_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TOKEN_TTL_MINUTES: i64 = 12 * 60;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub seed: u64,
    pub token_ttl_minutes: i64,
    pub password_iterations: u32,
    /// Code similarity at or above which two submissions are flagged.
    pub plagiarism_threshold: f64,
    pub dedup_threshold: f64,
    pub max_attempts_per_question: usize,
    /// Score maps used for readability and complexity; the aggregation
    /// weights come from each lab.
    pub grading: GradingConfig,
    /// Worst cases listed in the class error report.
    pub worst_k: usize,
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            token_ttl_minutes: DEFAULT_TOKEN_TTL_MINUTES,
            password_iterations: DEFAULT_ITERATIONS,
            plagiarism_threshold: DEFAULT_PLAGIARISM_THRESHOLD,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            max_attempts_per_question: DEFAULT_MAX_ATTEMPTS,
            grading: GradingConfig::default(),
            worst_k: 5,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

// ----- request and response shapes -----

#[derive(Debug, Clone, Deserialize)]
pub struct NewUser {
    pub username: String,
    pub password: String,
    pub role: Role,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub section: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewLab {
    pub title: String,
    pub section: String,
    pub topic_keywords: Vec<String>,
    pub difficulty: Difficulty,
    pub viva_duration_minutes: u32,
    pub mode: LabMode,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub instructions: String,
    pub deadline: DateTime<Utc>,
    #[serde(default)]
    pub viva_question_count: Option<usize>,
    #[serde(default)]
    pub viva_weight: Option<f64>,
    #[serde(default)]
    pub grade_weights: Option<AggregationWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationStatus {
    pub student_id: String,
    pub allocation_id: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSummary {
    pub lab_id: String,
    pub count: usize,
    pub students: Vec<AllocationStatus>,
}

/// What a student sees of an allocation: the question, never the rubric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentAllocation {
    pub allocation_id: String,
    pub question_text: String,
    pub generated_at: DateTime<Utc>,
}

impl From<&Allocation> for StudentAllocation {
    fn from(a: &Allocation) -> Self {
        Self { allocation_id: a.allocation_id.clone(), question_text: a.question_text.clone(), generated_at: a.generated_at }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MyLab {
    pub lab: Lab,
    /// Students only.
    pub allocation: Option<StudentAllocation>,
    pub submission_id: Option<String>,
    pub final_score: Option<f64>,
    /// Faculty only.
    pub allocation_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabDetail {
    pub lab: Lab,
    /// Faculty see every allocation with its rubric.
    pub allocations: Vec<Allocation>,
    /// Students see their own question only.
    pub my_allocation: Option<StudentAllocation>,
}

/// Viva session as shown to the student: questions without rubrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaView {
    pub session_id: String,
    pub questions: Vec<String>,
    pub answered: Vec<Option<f64>>,
    pub state: VivaState,
    pub started_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
    pub duration_limit_minutes: u32,
    pub viva_score: Option<f64>,
}

impl From<&VivaSession> for VivaView {
    fn from(s: &VivaSession) -> Self {
        Self {
            session_id: s.session_id.clone(),
            questions: s.questions.iter().map(|q| q.question_text.clone()).collect(),
            answered: s.answers.iter().map(|a| a.as_ref().map(|a| a.score)).collect(),
            state: s.state,
            started_at: s.started_at,
            deadline: s.deadline(),
            duration_limit_minutes: s.duration_limit_minutes,
            viva_score: s.viva_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionReceipt {
    pub submission: Submission,
    pub viva: VivaView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaProgress {
    pub session_id: String,
    pub index: usize,
    pub score: f64,
    pub feedback: String,
    pub answered: usize,
    pub total: usize,
    pub state: VivaState,
    pub viva_score: Option<f64>,
    pub final_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum ReportScope {
    Lab(String),
    Section(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSection {
    /// "ok" or "insufficient pairs"
    pub status: String,
    pub n_pairs: usize,
    pub report: Option<AgreementReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub student_id: String,
    pub submission_id: String,
    pub lab_id: String,
    pub final_score: f64,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlagiarismAlert {
    pub submission_a: String,
    pub submission_b: String,
    pub student_a: String,
    pub student_b: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub scope: ReportScope,
    pub lab_ids: Vec<String>,
    /// Lab modes in scope, for labeling only.
    pub modes: Vec<LabMode>,
    pub n_allocations: usize,
    pub n_submissions: usize,
    /// AI score against faculty override, where overrides exist.
    pub agreement: AgreementSection,
    pub errors: Option<ErrorReport>,
    pub ranking: Vec<RankEntry>,
    pub plagiarism_alerts: Vec<PlagiarismAlert>,
    pub overrides: Vec<AuditEntry>,
}

/// Portable record of one submission for publishing elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportArchive {
    pub format: String,
    pub version: u32,
    pub lab_id: String,
    pub lab_title: String,
    pub student_id: String,
    pub question_text: String,
    pub code_text: String,
    pub language_tag: String,
    pub submitted_at: DateTime<Utc>,
    pub ai_score: Option<f64>,
    pub viva_score: Option<f64>,
    pub faculty_override: Option<f64>,
    pub final_score: Option<f64>,
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub last_seq: u64,
    pub grading_available: bool,
}

// ----- the service -----

struct Writer {
    state: ServiceState,
    store: EventStore,
}

impl Writer {
    fn commit(&mut self, at: DateTime<Utc>, payload: DomainEvent) -> ServiceResult<()> {
        let ev = StoredEvent::new(self.state.last_seq + 1, at, payload);
        self.store.append(&ev).map_err(|e| ServiceError::Storage(e.to_string()))?;
        self.state.apply(&ev);
        if let Err(e) = self.store.after_apply(&self.state) {
            // the event itself is durable; a missed snapshot only slows the next start
            log::warn!("snapshot failed: {e}");
        }
        Ok(())
    }
}

pub struct LabService {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    model: Option<GbtModel>,
    generator: Arc<dyn QuestionGenerator>,
    sessions: SessionTable,
    writer: Mutex<Writer>,
    published: RwLock<Arc<ServiceState>>,
}

fn require(caller: &SessionToken, role: Role) -> ServiceResult<()> {
    if caller.role == role {
        Ok(())
    } else {
        Err(ServiceError::Forbidden { role: format!("{:?}", caller.role) })
    }
}

fn not_found(kind: &'static str, id: &str) -> ServiceError {
    ServiceError::NotFound { kind, id: id.to_string() }
}

impl LabService {
    pub fn new(
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        model: Option<GbtModel>,
        store: EventStore,
        state: ServiceState,
    ) -> Self {
        let published = RwLock::new(Arc::new(state.clone()));
        Self {
            config,
            clock,
            model,
            generator: Arc::new(TemplateGenerator),
            sessions: SessionTable::default(),
            writer: Mutex::new(Writer { state, store }),
            published,
        }
    }

    /// A service whose log lives only in memory.
    pub fn in_memory(config: ServiceConfig, clock: Arc<dyn Clock>, model: Option<GbtModel>) -> Self {
        Self::new(config, clock, model, EventStore::memory(), ServiceState::default())
    }

    /// A service backed by the store in `dir`, replaying whatever it holds.
    pub fn open_dir(
        dir: &Path,
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        model: Option<GbtModel>,
    ) -> io::Result<Self> {
        let (store, state) = FileStore::open(dir, config.snapshot_every, true)?;
        Ok(Self::new(config, clock, model, EventStore::File(store), state))
    }

    /// Replaces the question generator used for allocations.
    pub fn with_generator(mut self, generator: Arc<dyn QuestionGenerator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn grading_available(&self) -> bool {
        self.model.is_some()
    }

    /// The latest published state.
    pub fn view(&self) -> Arc<ServiceState> {
        self.published.read().unwrap().clone()
    }

    /// Copy of the event log for memory-backed services.
    pub fn memory_log(&self) -> Option<Vec<StoredEvent>> {
        self.writer.lock().unwrap().store.memory_log().map(<[_]>::to_vec)
    }

    /// Syncs the log and writes a snapshot.
    pub fn flush(&self) -> ServiceResult<()> {
        let mut w = self.writer.lock().unwrap();
        let Writer { state, store } = &mut *w;
        store.flush(state).map_err(|e| ServiceError::Storage(e.to_string()))
    }

    fn write<T>(&self, f: impl FnOnce(&mut Writer, DateTime<Utc>) -> ServiceResult<T>) -> ServiceResult<T> {
        let mut w = self.writer.lock().unwrap();
        let before = w.state.last_seq;
        let now = self.clock.now();
        let out = f(&mut w, now);
        if w.state.last_seq != before {
            *self.published.write().unwrap() = Arc::new(w.state.clone());
        }
        out
    }

    // ----- identity -----

    /// Creates an account. Not exposed over HTTP; used by the admin command.
    pub fn register_user(&self, new: NewUser) -> ServiceResult<User> {
        let mut bad = Vec::new();
        if new.username.trim().is_empty() || new.username.trim() != new.username {
            bad.push("username".to_string());
        }
        if new.password.is_empty() {
            bad.push("password".to_string());
        }
        if !bad.is_empty() {
            return Err(ServiceError::ValidationFailed(bad));
        }
        let hash = hash_password(&new.password, self.config.password_iterations);
        self.write(|w, now| {
            if w.state.usernames.contains_key(&new.username) {
                return Err(ServiceError::Conflict(format!("username `{}` is taken", new.username)));
            }
            let user = User {
                user_id: format!("u-{:04}", w.state.counters.users + 1),
                display_name: if new.display_name.is_empty() { new.username.clone() } else { new.display_name },
                username: new.username,
                role: new.role,
                credential_hash: hash,
                section: new.section,
                disabled: false,
            };
            w.commit(now, DomainEvent::UserRegistered { user: user.clone() })?;
            Ok(user)
        })
    }

    pub fn login(&self, username: &str, password: &str) -> ServiceResult<SessionToken> {
        let view = self.view();
        let Some(user) = view.user_by_name(username) else {
            dummy_verify(password, self.config.password_iterations);
            return Err(ServiceError::BadCredentials);
        };
        if !verify_password(password, &user.credential_hash) {
            return Err(ServiceError::BadCredentials);
        }
        if user.disabled {
            return Err(ServiceError::AccountDisabled);
        }
        let ttl = Duration::minutes(self.config.token_ttl_minutes);
        Ok(self.sessions.issue(&user.user_id, user.role, self.clock.now(), ttl))
    }

    /// Resolves a bearer token; unknown and expired tokens are Unauthorized.
    pub fn authenticate(&self, token: &str) -> ServiceResult<SessionToken> {
        self.sessions.resolve(token, self.clock.now()).ok_or(ServiceError::Unauthorized)
    }

    // ----- lab lifecycle -----

    pub fn create_lab(&self, caller: &SessionToken, new: NewLab) -> ServiceResult<Lab> {
        require(caller, Role::Faculty)?;
        self.write(|w, now| {
            let mut lab = Lab {
                lab_id: format!("lab-{:04}", w.state.counters.labs + 1),
                owner_id: caller.user_id.clone(),
                title: new.title,
                section: new.section,
                topic_keywords: new.topic_keywords.into_iter().map(|k| k.trim().to_string()).collect(),
                difficulty: new.difficulty,
                viva_duration_minutes: new.viva_duration_minutes,
                mode: new.mode,
                description: new.description,
                instructions: new.instructions,
                deadline: new.deadline,
                state: LabState::Draft,
                viva_question_count: new.viva_question_count.unwrap_or(DEFAULT_VIVA_QUESTIONS),
                viva_weight: new.viva_weight.unwrap_or(DEFAULT_VIVA_WEIGHT),
                grade_weights: new.grade_weights.unwrap_or_default(),
                created_at: now,
                activated_at: None,
            };
            let mut bad = lab.validate().err().unwrap_or_default();
            if !(1..=MAX_VIVA_QUESTIONS).contains(&lab.viva_question_count) {
                bad.push("viva_question_count".to_string());
            }
            if lab.deadline <= now {
                bad.push("deadline".to_string());
            }
            if !bad.is_empty() {
                return Err(ServiceError::ValidationFailed(bad));
            }
            lab.title = lab.title.trim().to_string();
            w.commit(now, DomainEvent::LabCreated { lab: lab.clone() })?;
            Ok(lab)
        })
    }

    fn owned_lab<'a>(state: &'a ServiceState, caller: &SessionToken, lab_id: &str) -> ServiceResult<&'a Lab> {
        let lab = state.labs.get(lab_id).ok_or_else(|| not_found("lab", lab_id))?;
        if lab.owner_id != caller.user_id {
            return Err(ServiceError::NotOwner(lab_id.to_string()));
        }
        Ok(lab)
    }

    /// Generates one question per roster entry. Entries may be user ids or
    /// usernames of registered, enabled students.
    pub fn allocate(&self, caller: &SessionToken, lab_id: &str, roster: &[String]) -> ServiceResult<AllocationSummary> {
        require(caller, Role::Faculty)?;
        self.write(|w, now| {
            let lab = Self::owned_lab(&w.state, caller, lab_id)?.clone();
            if lab.state != LabState::Draft {
                return Err(ServiceError::Conflict(format!("lab `{lab_id}` is {:?}, not Draft", lab.state)));
            }
            let mut ids = Vec::with_capacity(roster.len());
            let mut bad = Vec::new();
            for entry in roster {
                let user = w.state.users.get(entry).or_else(|| w.state.user_by_name(entry));
                match user {
                    Some(u) if u.role == Role::Student && !u.disabled => ids.push(u.user_id.clone()),
                    _ => bad.push(format!("roster: `{entry}` is not an active student")),
                }
            }
            if !bad.is_empty() {
                return Err(ServiceError::ValidationFailed(bad));
            }
            let knobs = AllocationKnobs {
                seed: derive_seed(self.config.seed, &lab.lab_id),
                max_attempts_per_question: self.config.max_attempts_per_question,
                dedup_threshold: self.config.dedup_threshold,
            };
            let (_, allocations) =
                allocate_lab(&lab, &ids, &knobs, self.generator.as_ref(), bank_vectorizer(), now)?;
            let summary = AllocationSummary {
                lab_id: lab.lab_id.clone(),
                count: allocations.len(),
                students: allocations
                    .iter()
                    .map(|a| AllocationStatus {
                        student_id: a.student_id.clone(),
                        allocation_id: a.allocation_id.clone(),
                        status: "allocated".to_string(),
                    })
                    .collect(),
            };
            w.commit(now, DomainEvent::LabAllocated { lab_id: lab.lab_id, allocations })?;
            Ok(summary)
        })
    }

    /// Removes every allocation of a lab that is not yet active; the lab goes
    /// back to Draft.
    pub fn deallocate(&self, caller: &SessionToken, lab_id: &str) -> ServiceResult<Lab> {
        require(caller, Role::Faculty)?;
        self.write(|w, now| {
            let lab = Self::owned_lab(&w.state, caller, lab_id)?;
            if lab.state != LabState::Allocated {
                return Err(ServiceError::Conflict(format!(
                    "only Allocated labs can be deallocated; `{lab_id}` is {:?}",
                    lab.state
                )));
            }
            w.commit(now, DomainEvent::LabDeallocated { lab_id: lab_id.to_string(), by: caller.user_id.clone() })?;
            Ok(w.state.labs[lab_id].clone())
        })
    }

    fn transition(&self, caller: &SessionToken, lab_id: &str, next: LabState) -> ServiceResult<Lab> {
        require(caller, Role::Faculty)?;
        self.write(|w, now| {
            let lab = Self::owned_lab(&w.state, caller, lab_id)?;
            if let labassess_core::Transition::Rejected(why) = validate_transition(lab.state, next) {
                return Err(ServiceError::Conflict(why));
            }
            let ev = match next {
                LabState::Active => DomainEvent::LabActivated { lab_id: lab_id.to_string() },
                LabState::Closed => DomainEvent::LabClosed { lab_id: lab_id.to_string() },
                _ => unreachable!("only activate and close go through here"),
            };
            w.commit(now, ev)?;
            Ok(w.state.labs[lab_id].clone())
        })
    }

    pub fn activate(&self, caller: &SessionToken, lab_id: &str) -> ServiceResult<Lab> {
        self.transition(caller, lab_id, LabState::Active)
    }

    pub fn close(&self, caller: &SessionToken, lab_id: &str) -> ServiceResult<Lab> {
        self.transition(caller, lab_id, LabState::Closed)
    }

    pub fn my_labs(&self, caller: &SessionToken) -> ServiceResult<Vec<MyLab>> {
        let st = self.view();
        let out = match caller.role {
            Role::Faculty => st
                .labs
                .values()
                .filter(|l| l.owner_id == caller.user_id)
                .map(|l| MyLab {
                    lab: l.clone(),
                    allocation: None,
                    submission_id: None,
                    final_score: None,
                    allocation_count: Some(st.allocations_of_lab(&l.lab_id).count()),
                })
                .collect(),
            Role::Student => st
                .allocations
                .values()
                .filter(|a| a.student_id == caller.user_id)
                .filter_map(|a| {
                    let lab = st.labs.get(&a.lab_id)?;
                    let sub = st.current_submission.get(&a.allocation_id).and_then(|s| st.submissions.get(s));
                    Some(MyLab {
                        lab: lab.clone(),
                        allocation: Some(a.into()),
                        submission_id: sub.map(|s| s.submission_id.clone()),
                        final_score: sub.and_then(|s| s.final_score),
                        allocation_count: None,
                    })
                })
                .collect(),
        };
        Ok(out)
    }

    pub fn get_lab(&self, caller: &SessionToken, lab_id: &str) -> ServiceResult<LabDetail> {
        let st = self.view();
        match caller.role {
            Role::Faculty => {
                let lab = Self::owned_lab(&st, caller, lab_id)?;
                Ok(LabDetail {
                    lab: lab.clone(),
                    allocations: st.allocations_of_lab(lab_id).cloned().collect(),
                    my_allocation: None,
                })
            }
            Role::Student => {
                // labs the student is not part of are indistinguishable from missing ones
                let mine = st
                    .allocations_of_lab(lab_id)
                    .find(|a| a.student_id == caller.user_id)
                    .ok_or_else(|| not_found("lab", lab_id))?;
                Ok(LabDetail {
                    lab: st.labs[lab_id].clone(),
                    allocations: Vec::new(),
                    my_allocation: Some(mine.into()),
                })
            }
        }
    }

    // ----- submissions and viva -----

    pub fn submit_code(
        &self,
        caller: &SessionToken,
        allocation_id: &str,
        code_text: &str,
        language_tag: &str,
    ) -> ServiceResult<SubmissionReceipt> {
        require(caller, Role::Student)?;
        self.write(|w, now| {
            let st = &w.state;
            let alloc = st.allocations.get(allocation_id).ok_or_else(|| not_found("allocation", allocation_id))?;
            if alloc.student_id != caller.user_id {
                return Err(ServiceError::NotYourAllocation(allocation_id.to_string()));
            }
            let lab = &st.labs[&alloc.lab_id];
            if lab.state != LabState::Active {
                return Err(ServiceError::LabNotActive(lab.lab_id.clone()));
            }
            if now >= lab.deadline {
                return Err(ServiceError::DeadlinePassed);
            }
            let replaces = match st.current_submission.get(allocation_id).and_then(|s| st.submissions.get(s)) {
                None => None,
                Some(prev) => {
                    if prev.faculty_override.is_some() {
                        return Err(ServiceError::Conflict("the submission has already been marked by faculty".into()));
                    }
                    let open = prev
                        .viva_session_id
                        .as_ref()
                        .and_then(|sid| st.sessions.get(sid))
                        .is_some_and(|s| s.state == VivaState::Open && now < s.deadline());
                    if open {
                        return Err(ServiceError::Conflict("a viva for the current submission is in progress".into()));
                    }
                    Some(prev.submission_id.clone())
                }
            };
            let model = self.model.as_ref().ok_or(ServiceError::GradingUnavailable)?;
            let mut cfg = self.config.grading.clone();
            cfg.weights = lab.grade_weights;
            let grade = grade_submission(code_text, alloc, lab.difficulty, model, &cfg, &feature_vectorizer())
                .map_err(|e| match e {
                    GradingError::InvalidWeights(_) => ServiceError::ValidationFailed(vec!["grade_weights".into()]),
                    GradingError::Model(_) => ServiceError::GradingUnavailable,
                })?;

            let submission_id = format!("sub-{:05}", st.counters.submissions + 1);
            let session_id = format!("viva-{:05}", st.counters.sessions + 1);
            let questions: Vec<VivaQuestion> = viva_questions(
                &lab.topic_keywords,
                lab.viva_question_count,
                derive_seed(self.config.seed, &format!("viva/{allocation_id}/{submission_id}")),
            )
            .into_iter()
            .map(|(q, a)| VivaQuestion { question_text: q, rubric_answer: a })
            .collect();
            let viva = VivaSession {
                session_id: session_id.clone(),
                allocation_id: allocation_id.to_string(),
                submission_id: submission_id.clone(),
                answers: vec![None; questions.len()],
                questions,
                state: VivaState::Open,
                started_at: now,
                duration_limit_minutes: lab.viva_duration_minutes,
                viva_score: None,
                finished_at: None,
            };
            let mut submission = Submission {
                submission_id: submission_id.clone(),
                allocation_id: allocation_id.to_string(),
                student_id: caller.user_id.clone(),
                code_text: code_text.to_string(),
                language_tag: language_tag.to_string(),
                submitted_at: now,
                ai_score: Some(grade.final_score),
                faculty_override: None,
                viva_score: None,
                final_score: None,
                feedback: grade.feedback.clone(),
                grade: Some(grade),
                viva_session_id: Some(session_id.clone()),
                completed_at: None,
            };
            submission.recompute_final(lab.viva_weight);
            w.commit(now, DomainEvent::SubmissionRecorded { submission, viva, replaces })?;
            Ok(SubmissionReceipt {
                submission: w.state.submissions[&submission_id].clone(),
                viva: (&w.state.sessions[&session_id]).into(),
            })
        })
    }

    pub fn get_viva(&self, caller: &SessionToken, session_id: &str) -> ServiceResult<VivaView> {
        require(caller, Role::Student)?;
        let st = self.view();
        let s = st.sessions.get(session_id).ok_or_else(|| not_found("viva session", session_id))?;
        if st.allocations.get(&s.allocation_id).is_none_or(|a| a.student_id != caller.user_id) {
            return Err(ServiceError::NotYourAllocation(s.allocation_id.clone()));
        }
        Ok(s.into())
    }

    pub fn answer_viva(
        &self,
        caller: &SessionToken,
        session_id: &str,
        index: usize,
        answer_text: &str,
    ) -> ServiceResult<VivaProgress> {
        require(caller, Role::Student)?;
        self.write(|w, now| {
            let s = w.state.sessions.get(session_id).ok_or_else(|| not_found("viva session", session_id))?;
            if w.state.allocations.get(&s.allocation_id).is_none_or(|a| a.student_id != caller.user_id) {
                return Err(ServiceError::NotYourAllocation(s.allocation_id.clone()));
            }
            match s.state {
                VivaState::Expired => return Err(ServiceError::SessionExpired(session_id.to_string())),
                VivaState::Completed => return Err(ServiceError::Conflict("the viva is already complete".into())),
                VivaState::Open => {}
            }
            if now >= s.deadline() {
                w.commit(now, DomainEvent::VivaFinished { session_id: session_id.to_string(), state: VivaState::Expired })?;
                return Err(ServiceError::SessionExpired(session_id.to_string()));
            }
            let len = s.questions.len();
            if index >= len {
                return Err(ServiceError::IndexOutOfRange { index, len });
            }
            if s.answers[index].is_some() {
                return Err(ServiceError::AlreadyAnswered(index));
            }
            let scored = score_viva_answer(answer_text, &s.questions[index].rubric_answer, &feature_vectorizer())
                .map_err(|e| ServiceError::ValidationFailed(vec![e.to_string()]))?;
            w.commit(
                now,
                DomainEvent::VivaAnswered {
                    session_id: session_id.to_string(),
                    index,
                    answer_text: answer_text.to_string(),
                    score: scored.score,
                },
            )?;
            let s = &w.state.sessions[session_id];
            if s.answered() == s.questions.len() {
                w.commit(now, DomainEvent::VivaFinished { session_id: session_id.to_string(), state: VivaState::Completed })?;
            }
            let s = &w.state.sessions[session_id];
            let sub = &w.state.submissions[&s.submission_id];
            Ok(VivaProgress {
                session_id: session_id.to_string(),
                index,
                score: scored.score,
                feedback: scored.feedback,
                answered: s.answered(),
                total: s.questions.len(),
                state: s.state,
                viva_score: s.viva_score,
                final_score: sub.final_score,
            })
        })
    }

    /// Expires every open viva whose time is up; returns the expired ids.
    pub fn sweep_expired(&self) -> ServiceResult<Vec<String>> {
        self.write(|w, now| {
            let due: Vec<String> = w
                .state
                .sessions
                .values()
                .filter(|s| s.state == VivaState::Open && now >= s.deadline())
                .map(|s| s.session_id.clone())
                .collect();
            for id in &due {
                w.commit(now, DomainEvent::VivaFinished { session_id: id.clone(), state: VivaState::Expired })?;
            }
            Ok(due)
        })
    }

    pub fn override_score(
        &self,
        caller: &SessionToken,
        submission_id: &str,
        value: f64,
        reason: &str,
    ) -> ServiceResult<Submission> {
        require(caller, Role::Faculty)?;
        if !check_mark(value) {
            return Err(ServiceError::OutOfRange(value));
        }
        if reason.trim().is_empty() {
            return Err(ServiceError::ValidationFailed(vec!["reason".into()]));
        }
        self.write(|w, now| {
            let lab = w.state.lab_of_submission(submission_id).ok_or_else(|| not_found("submission", submission_id))?;
            if lab.owner_id != caller.user_id {
                return Err(ServiceError::NotOwner(lab.lab_id.clone()));
            }
            w.commit(
                now,
                DomainEvent::ScoreOverridden {
                    submission_id: submission_id.to_string(),
                    value: value.clamp(0.0, 100.0),
                    reason: reason.trim().to_string(),
                    by: caller.user_id.clone(),
                },
            )?;
            Ok(w.state.submissions[submission_id].clone())
        })
    }

    // ----- reports -----

    pub fn class_report(&self, caller: &SessionToken, scope: &ReportScope) -> ServiceResult<ClassReport> {
        require(caller, Role::Faculty)?;
        let st = self.view();
        let labs: Vec<&Lab> = match scope {
            ReportScope::Lab(id) => vec![Self::owned_lab(&st, caller, id)?],
            ReportScope::Section(section) => {
                let labs: Vec<&Lab> =
                    st.labs.values().filter(|l| l.owner_id == caller.user_id && &l.section == section).collect();
                if labs.is_empty() {
                    return Err(not_found("section", section));
                }
                labs
            }
        };
        let mut subs: Vec<(&Lab, &Submission)> = Vec::new();
        let mut n_allocations = 0;
        for lab in &labs {
            n_allocations += st.allocations_of_lab(&lab.lab_id).count();
            subs.extend(st.submissions_of_lab(&lab.lab_id).into_iter().map(|s| (*lab, s)));
        }

        let pairs: Vec<(&Submission, f64, f64)> = subs
            .iter()
            .filter_map(|(_, s)| Some((*s, s.ai_score?, s.faculty_override?)))
            .collect();
        let agreement = match agreement_report(&pairs.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>()) {
            Ok(r) => AgreementSection { status: "ok".into(), n_pairs: pairs.len(), report: Some(r) },
            Err(_) => AgreementSection { status: "insufficient pairs".into(), n_pairs: pairs.len(), report: None },
        };
        let topic_of = |s: &Submission| {
            st.allocations.get(&s.allocation_id).and_then(|a| st.labs.get(&a.lab_id)).map_or(String::new(), |l| {
                l.topic_keywords.first().cloned().unwrap_or_default()
            })
        };
        let rows: Vec<ErrorRow> =
            pairs.iter().map(|(s, ai, fac)| ErrorRow::new(s.submission_id.clone(), *fac, *ai, topic_of(s))).collect();
        let errors = error_report(&rows, self.config.worst_k).ok();

        let mut ranked: Vec<(&Lab, &Submission, f64, DateTime<Utc>)> = subs
            .iter()
            .filter_map(|(l, s)| Some((*l, *s, s.final_score?, s.completed_at.unwrap_or(s.submitted_at))))
            .collect();
        ranked.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then(a.3.cmp(&b.3)).then_with(|| a.1.submission_id.cmp(&b.1.submission_id))
        });
        let ranking = ranked
            .iter()
            .enumerate()
            .map(|(i, (l, s, f, at))| RankEntry {
                rank: i + 1,
                student_id: s.student_id.clone(),
                submission_id: s.submission_id.clone(),
                lab_id: l.lab_id.clone(),
                final_score: *f,
                completed_at: *at,
            })
            .collect();

        let plagiarism_alerts = plagiarism_alerts(&subs, self.config.plagiarism_threshold);
        let sub_ids: std::collections::BTreeSet<&str> = subs.iter().map(|(_, s)| s.submission_id.as_str()).collect();
        let overrides = st
            .audit
            .iter()
            .filter(|e| matches!(&e.action, AuditAction::Override { submission_id, .. } if sub_ids.contains(submission_id.as_str())))
            .cloned()
            .collect();
        let mut modes: Vec<LabMode> = Vec::new();
        for l in &labs {
            if !modes.contains(&l.mode) {
                modes.push(l.mode);
            }
        }
        Ok(ClassReport {
            scope: scope.clone(),
            lab_ids: labs.iter().map(|l| l.lab_id.clone()).collect(),
            modes,
            n_allocations,
            n_submissions: subs.len(),
            agreement,
            errors,
            ranking,
            plagiarism_alerts,
            overrides,
        })
    }

    pub fn my_progress(&self, caller: &SessionToken) -> ServiceResult<ProgressProfile> {
        let st = self.view();
        let events = st.progress_events(&caller.user_id, caller.role);
        build_progress_profile(&caller.user_id, caller.role, &events).map_err(|e| ServiceError::Storage(e.to_string()))
    }

    pub fn export(&self, caller: &SessionToken, submission_id: &str) -> ServiceResult<ExportArchive> {
        let st = self.view();
        let sub = st.submissions.get(submission_id).ok_or_else(|| not_found("submission", submission_id))?;
        let lab = st.lab_of_submission(submission_id).ok_or_else(|| not_found("submission", submission_id))?;
        let allowed = match caller.role {
            Role::Student => sub.student_id == caller.user_id,
            Role::Faculty => lab.owner_id == caller.user_id,
        };
        if !allowed {
            return Err(ServiceError::NotOwner(submission_id.to_string()));
        }
        Ok(ExportArchive {
            format: "labassess-export".into(),
            version: 1,
            lab_id: lab.lab_id.clone(),
            lab_title: lab.title.clone(),
            student_id: sub.student_id.clone(),
            question_text: st.allocations[&sub.allocation_id].question_text.clone(),
            code_text: sub.code_text.clone(),
            language_tag: sub.language_tag.clone(),
            submitted_at: sub.submitted_at,
            ai_score: sub.ai_score,
            viva_score: sub.viva_score,
            faculty_override: sub.faculty_override,
            final_score: sub.final_score,
            feedback: sub.feedback.clone(),
        })
    }

    pub fn audit_trail(&self, caller: &SessionToken, submission_id: &str) -> ServiceResult<Vec<AuditEntry>> {
        require(caller, Role::Faculty)?;
        let st = self.view();
        let lab = st.lab_of_submission(submission_id).ok_or_else(|| not_found("submission", submission_id))?;
        if lab.owner_id != caller.user_id {
            return Err(ServiceError::NotOwner(lab.lab_id.clone()));
        }
        Ok(st
            .audit
            .iter()
            .filter(|e| matches!(&e.action, AuditAction::Override { submission_id: s, .. } if s == submission_id))
            .cloned()
            .collect())
    }

    pub fn healthz(&self) -> Health {
        Health { status: "ok".into(), last_seq: self.view().last_seq, grading_available: self.grading_available() }
    }
}

/// Pairs of submissions whose code is at least `threshold` similar, using
/// TF-IDF fitted on the codes in scope.
fn plagiarism_alerts(subs: &[(&Lab, &Submission)], threshold: f64) -> Vec<PlagiarismAlert> {
    let vz = TfIdfVectorizer::fit(subs.iter().map(|(_, s)| s.code_text.as_str()));
    let vecs: Vec<_> = subs.iter().map(|(_, s)| vz.vectorize(&s.code_text)).collect();
    let mut out = Vec::new();
    for i in 0..subs.len() {
        for j in (i + 1)..subs.len() {
            let sim = cosine(&vecs[i], &vecs[j]);
            if sim >= threshold {
                let (a, b) = (subs[i].1, subs[j].1);
                let (a, b) = if a.submission_id <= b.submission_id { (a, b) } else { (b, a) };
                out.push(PlagiarismAlert {
                    submission_a: a.submission_id.clone(),
                    submission_b: b.submission_id.clone(),
                    student_a: a.student_id.clone(),
                    student_b: b.student_id.clone(),
                    similarity: sim,
                });
            }
        }
    }
    out.sort_by(|x, y| {
        y.similarity.total_cmp(&x.similarity).then_with(|| (&x.submission_a, &x.submission_b).cmp(&(&y.submission_a, &y.submission_b)))
    });
    out
}
