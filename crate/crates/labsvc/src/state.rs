//! Service state as a pure fold over the event log.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use labassess_core::analytics::{ProgressEvent, ProgressEventKind};
use labassess_core::{Allocation, Lab, LabState, Role, Submission, User};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VivaState {
    Open,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaQuestion {
    pub question_text: String,
    pub rubric_answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaAnswer {
    pub answer_text: String,
    pub score: f64,
    pub answered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VivaSession {
    pub session_id: String,
    pub allocation_id: String,
    pub submission_id: String,
    pub questions: Vec<VivaQuestion>,
    /// One slot per question, filled in as answers arrive.
    pub answers: Vec<Option<VivaAnswer>>,
    pub state: VivaState,
    pub started_at: DateTime<Utc>,
    pub duration_limit_minutes: u32,
    pub viva_score: Option<f64>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl VivaSession {
    pub fn deadline(&self) -> DateTime<Utc> {
        self.started_at + chrono::Duration::minutes(i64::from(self.duration_limit_minutes))
    }

    pub fn answered(&self) -> usize {
        self.answers.iter().filter(|a| a.is_some()).count()
    }

    /// Mean over all questions; unanswered questions count as 0.
    pub fn mean_score(&self) -> f64 {
        if self.questions.is_empty() {
            return 0.0;
        }
        let mut scores: Vec<f64> = self.answers.iter().map(|a| a.as_ref().map_or(0.0, |a| a.score)).collect();
        scores.sort_by(f64::total_cmp);
        scores.iter().sum::<f64>() / self.questions.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AuditAction {
    Override {
        submission_id: String,
        prior_final: Option<f64>,
        prior_override: Option<f64>,
        value: f64,
        reason: String,
    },
    Resubmission {
        allocation_id: String,
        replaced_submission_id: String,
        prior_ai_score: Option<f64>,
        prior_final: Option<f64>,
    },
    Deallocation {
        lab_id: String,
        allocations_removed: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub actor: String,
    #[serde(flatten)]
    pub action: AuditAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum DomainEvent {
    UserRegistered {
        user: User,
    },
    LabCreated {
        lab: Lab,
    },
    LabAllocated {
        lab_id: String,
        allocations: Vec<Allocation>,
    },
    LabDeallocated {
        lab_id: String,
        by: String,
    },
    LabActivated {
        lab_id: String,
    },
    LabClosed {
        lab_id: String,
    },
    SubmissionRecorded {
        submission: Submission,
        viva: VivaSession,
        /// Earlier submission for the same allocation that this one replaces.
        replaces: Option<String>,
    },
    VivaAnswered {
        session_id: String,
        index: usize,
        answer_text: String,
        score: f64,
    },
    VivaFinished {
        session_id: String,
        state: VivaState,
    },
    ScoreOverridden {
        submission_id: String,
        value: f64,
        reason: String,
        by: String,
    },
}

impl DomainEvent {
    /// (entity kind, entity id) the event is about.
    pub fn entity(&self) -> (&'static str, String) {
        match self {
            DomainEvent::UserRegistered { user } => ("user", user.user_id.clone()),
            DomainEvent::LabCreated { lab } => ("lab", lab.lab_id.clone()),
            DomainEvent::LabAllocated { lab_id, .. }
            | DomainEvent::LabDeallocated { lab_id, .. }
            | DomainEvent::LabActivated { lab_id }
            | DomainEvent::LabClosed { lab_id } => ("lab", lab_id.clone()),
            DomainEvent::SubmissionRecorded { submission, .. } => ("submission", submission.submission_id.clone()),
            DomainEvent::VivaAnswered { session_id, .. } | DomainEvent::VivaFinished { session_id, .. } => {
                ("viva", session_id.clone())
            }
            DomainEvent::ScoreOverridden { submission_id, .. } => ("submission", submission_id.clone()),
        }
    }
}

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    pub entity_kind: String,
    pub entity_id: String,
    pub recorded_at: DateTime<Utc>,
    pub payload: DomainEvent,
}

impl StoredEvent {
    pub fn new(seq: u64, recorded_at: DateTime<Utc>, payload: DomainEvent) -> Self {
        let (kind, id) = payload.entity();
        Self { seq, entity_kind: kind.to_string(), entity_id: id, recorded_at, payload }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub users: u64,
    pub labs: u64,
    pub submissions: u64,
    pub sessions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    pub last_seq: u64,
    pub counters: Counters,
    pub users: BTreeMap<String, User>,
    /// username → user id
    pub usernames: BTreeMap<String, String>,
    pub labs: BTreeMap<String, Lab>,
    pub allocations: BTreeMap<String, Allocation>,
    pub submissions: BTreeMap<String, Submission>,
    /// allocation id → id of its current submission
    pub current_submission: BTreeMap<String, String>,
    pub sessions: BTreeMap<String, VivaSession>,
    pub audit: Vec<AuditEntry>,
}

impl ServiceState {
    /// Folds one event into the state. Events are validated before they are
    /// logged, so references are expected to resolve; anything that does not
    /// is skipped.
    pub fn apply(&mut self, ev: &StoredEvent) {
        self.last_seq = ev.seq;
        let at = ev.recorded_at;
        match &ev.payload {
            DomainEvent::UserRegistered { user } => {
                self.counters.users += 1;
                self.usernames.insert(user.username.clone(), user.user_id.clone());
                self.users.insert(user.user_id.clone(), user.clone());
            }
            DomainEvent::LabCreated { lab } => {
                self.counters.labs += 1;
                self.labs.insert(lab.lab_id.clone(), lab.clone());
            }
            DomainEvent::LabAllocated { lab_id, allocations } => {
                if let Some(lab) = self.labs.get_mut(lab_id) {
                    lab.state = LabState::Allocated;
                }
                for a in allocations {
                    self.allocations.insert(a.allocation_id.clone(), a.clone());
                }
            }
            DomainEvent::LabDeallocated { lab_id, by } => {
                let before = self.allocations.len();
                self.allocations.retain(|_, a| a.lab_id != *lab_id);
                if let Some(lab) = self.labs.get_mut(lab_id) {
                    lab.state = LabState::Draft;
                }
                self.audit.push(AuditEntry {
                    seq: ev.seq,
                    at,
                    actor: by.clone(),
                    action: AuditAction::Deallocation {
                        lab_id: lab_id.clone(),
                        allocations_removed: before - self.allocations.len(),
                    },
                });
            }
            DomainEvent::LabActivated { lab_id } => {
                if let Some(lab) = self.labs.get_mut(lab_id) {
                    lab.state = LabState::Active;
                    lab.activated_at.get_or_insert(at);
                }
            }
            DomainEvent::LabClosed { lab_id } => {
                if let Some(lab) = self.labs.get_mut(lab_id) {
                    lab.state = LabState::Closed;
                }
            }
            DomainEvent::SubmissionRecorded { submission, viva, replaces } => {
                self.counters.submissions += 1;
                self.counters.sessions += 1;
                if let Some(old_id) = replaces {
                    if let Some(old) = self.submissions.remove(old_id) {
                        if let Some(sid) = &old.viva_session_id {
                            self.sessions.remove(sid);
                        }
                        self.audit.push(AuditEntry {
                            seq: ev.seq,
                            at,
                            actor: submission.student_id.clone(),
                            action: AuditAction::Resubmission {
                                allocation_id: old.allocation_id.clone(),
                                replaced_submission_id: old.submission_id.clone(),
                                prior_ai_score: old.ai_score,
                                prior_final: old.final_score,
                            },
                        });
                    }
                }
                self.current_submission.insert(submission.allocation_id.clone(), submission.submission_id.clone());
                self.submissions.insert(submission.submission_id.clone(), submission.clone());
                self.sessions.insert(viva.session_id.clone(), viva.clone());
            }
            DomainEvent::VivaAnswered { session_id, index, answer_text, score } => {
                if let Some(slot) = self.sessions.get_mut(session_id).and_then(|s| s.answers.get_mut(*index)) {
                    *slot = Some(VivaAnswer { answer_text: answer_text.clone(), score: *score, answered_at: at });
                }
            }
            DomainEvent::VivaFinished { session_id, state } => {
                let Some(session) = self.sessions.get_mut(session_id) else { return };
                let score = session.mean_score();
                session.state = *state;
                session.viva_score = Some(score);
                session.finished_at = Some(at);
                let sub_id = session.submission_id.clone();
                let weight = self.viva_weight_for(&sub_id);
                if let Some(sub) = self.submissions.get_mut(&sub_id) {
                    sub.viva_score = Some(score);
                    sub.completed_at = Some(at);
                    sub.recompute_final(weight);
                }
            }
            DomainEvent::ScoreOverridden { submission_id, value, reason, by } => {
                let weight = self.viva_weight_for(submission_id);
                if let Some(sub) = self.submissions.get_mut(submission_id) {
                    let (prior_final, prior_override) = (sub.final_score, sub.faculty_override);
                    sub.faculty_override = Some(*value);
                    sub.recompute_final(weight);
                    self.audit.push(AuditEntry {
                        seq: ev.seq,
                        at,
                        actor: by.clone(),
                        action: AuditAction::Override {
                            submission_id: submission_id.clone(),
                            prior_final,
                            prior_override,
                            value: *value,
                            reason: reason.clone(),
                        },
                    });
                }
            }
        }
    }

    fn viva_weight_for(&self, submission_id: &str) -> f64 {
        self.submissions
            .get(submission_id)
            .and_then(|s| self.allocations.get(&s.allocation_id))
            .and_then(|a| self.labs.get(&a.lab_id))
            .map_or(labassess_core::domain::DEFAULT_VIVA_WEIGHT, |l| l.viva_weight)
    }

    pub fn user_by_name(&self, username: &str) -> Option<&User> {
        self.usernames.get(username).and_then(|id| self.users.get(id))
    }

    pub fn lab_of_submission(&self, submission_id: &str) -> Option<&Lab> {
        let sub = self.submissions.get(submission_id)?;
        let alloc = self.allocations.get(&sub.allocation_id)?;
        self.labs.get(&alloc.lab_id)
    }

    pub fn allocations_of_lab<'a>(&'a self, lab_id: &'a str) -> impl Iterator<Item = &'a Allocation> + 'a {
        self.allocations.values().filter(move |a| a.lab_id == lab_id)
    }

    pub fn submissions_of_lab(&self, lab_id: &str) -> Vec<&Submission> {
        self.allocations_of_lab(lab_id)
            .filter_map(|a| self.current_submission.get(&a.allocation_id))
            .filter_map(|s| self.submissions.get(s))
            .collect()
    }

    fn override_times(&self) -> BTreeMap<&str, Vec<(DateTime<Utc>, f64)>> {
        let mut out: BTreeMap<&str, Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
        for e in &self.audit {
            if let AuditAction::Override { submission_id, value, .. } = &e.action {
                out.entry(submission_id.as_str()).or_default().push((e.at, *value));
            }
        }
        out
    }

    /// Progress events for one user, derived from the current state.
    pub fn progress_events(&self, user_id: &str, role: Role) -> Vec<ProgressEvent> {
        let overrides = self.override_times();
        let mut events = Vec::new();
        let mut push = |lab_id: &str, at: DateTime<Utc>, kind: ProgressEventKind| {
            events.push(ProgressEvent { subject_id: user_id.to_string(), lab_id: lab_id.to_string(), at, kind });
        };
        // completion events of a submission: the viva finishing, then each override
        let completions = |sub: &Submission| -> Vec<(DateTime<Utc>, f64)> {
            let mut out = Vec::new();
            let weight = self.viva_weight_for(&sub.submission_id);
            let grade = sub.grade.as_ref().map(|g| g.final_score).or(sub.ai_score);
            if let Some(done) = sub.completed_at {
                if let Some(f) = labassess_core::domain::compose_final(grade, sub.viva_score, None, weight) {
                    out.push((done, f));
                }
            }
            for (at, v) in overrides.get(sub.submission_id.as_str()).into_iter().flatten() {
                out.push((*at, *v));
            }
            out
        };
        match role {
            Role::Student => {
                for a in self.allocations.values().filter(|a| a.student_id == user_id) {
                    push(&a.lab_id, a.generated_at, ProgressEventKind::Assigned);
                    let Some(sub) = self.current_submission.get(&a.allocation_id).and_then(|s| self.submissions.get(s))
                    else {
                        continue;
                    };
                    push(&a.lab_id, sub.submitted_at, ProgressEventKind::Submitted);
                    for (at, f) in completions(sub) {
                        push(&a.lab_id, at, ProgressEventKind::Completed { final_score: f });
                    }
                }
            }
            Role::Faculty => {
                for lab in self.labs.values().filter(|l| l.owner_id == user_id) {
                    if let Some(at) = lab.activated_at {
                        push(&lab.lab_id, at, ProgressEventKind::Activated { section: lab.section.clone() });
                    }
                    for sub in self.submissions_of_lab(&lab.lab_id) {
                        for (at, f) in completions(sub) {
                            push(
                                &lab.lab_id,
                                at,
                                ProgressEventKind::ClassResult { student_id: sub.student_id.clone(), final_score: f },
                            );
                        }
                    }
                }
            }
        }
        events
    }
}
