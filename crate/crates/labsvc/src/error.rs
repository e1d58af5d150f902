use labassess_core::genpipe::GenError;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("missing, unknown or expired session token")]
    Unauthorized,
    #[error("role {role} may not call this operation")]
    Forbidden { role: String },
    #[error("you do not own {0}")]
    NotOwner(String),
    #[error("invalid username or password")]
    BadCredentials,
    #[error("account is disabled")]
    AccountDisabled,
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("validation failed: {}", .0.join(", "))]
    ValidationFailed(Vec<String>),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("allocation `{0}` belongs to another student")]
    NotYourAllocation(String),
    #[error("lab `{0}` is not active")]
    LabNotActive(String),
    #[error("the lab deadline has passed")]
    DeadlinePassed,
    #[error("viva session `{0}` has expired")]
    SessionExpired(String),
    #[error("question index {index} is out of range (session has {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("question {0} was already answered")]
    AlreadyAnswered(usize),
    #[error("mark {0} is outside [0, 100]")]
    OutOfRange(f64),
    #[error("grading is unavailable: no model loaded")]
    GradingUnavailable,
    #[error("question generation failed: {0}")]
    Generation(String),
    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("storage error: {0}")]
    Storage(String),
}

/// Wire form of every error: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::Forbidden { .. } => "forbidden",
            ServiceError::NotOwner(_) => "not_owner",
            ServiceError::BadCredentials => "bad_credentials",
            ServiceError::AccountDisabled => "account_disabled",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::ValidationFailed(_) => "validation_failed",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::NotYourAllocation(_) => "not_your_allocation",
            ServiceError::LabNotActive(_) => "lab_not_active",
            ServiceError::DeadlinePassed => "deadline_passed",
            ServiceError::SessionExpired(_) => "session_expired",
            ServiceError::IndexOutOfRange { .. } => "index_out_of_range",
            ServiceError::AlreadyAnswered(_) => "already_answered",
            ServiceError::OutOfRange(_) => "out_of_range",
            ServiceError::GradingUnavailable => "grading_unavailable",
            ServiceError::Generation(_) => "generation_failed",
            ServiceError::BackendUnavailable(_) => "backend_unavailable",
            ServiceError::Storage(_) => "storage_error",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthorized | ServiceError::BadCredentials => 401,
            ServiceError::Forbidden { .. }
            | ServiceError::NotOwner(_)
            | ServiceError::AccountDisabled
            | ServiceError::NotYourAllocation(_) => 403,
            ServiceError::NotFound { .. } => 404,
            ServiceError::Conflict(_)
            | ServiceError::LabNotActive(_)
            | ServiceError::DeadlinePassed
            | ServiceError::SessionExpired(_)
            | ServiceError::AlreadyAnswered(_) => 409,
            ServiceError::ValidationFailed(_)
            | ServiceError::IndexOutOfRange { .. }
            | ServiceError::OutOfRange(_)
            | ServiceError::Generation(_) => 422,
            ServiceError::GradingUnavailable | ServiceError::BackendUnavailable(_) => 503,
            ServiceError::Storage(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            ServiceError::ValidationFailed(fields) => serde_json::json!({ "fields": fields }),
            ServiceError::NotFound { kind, id } => serde_json::json!({ "kind": kind, "id": id }),
            ServiceError::IndexOutOfRange { index, len } => serde_json::json!({ "index": index, "len": len }),
            ServiceError::Forbidden { role } => serde_json::json!({ "role": role }),
            _ => Value::Null,
        };
        ErrorBody { code: self.code(), message: self.to_string(), details }
    }
}

impl From<GenError> for ServiceError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::AlreadyAllocated(id) => ServiceError::Conflict(format!("lab `{id}` is already allocated")),
            GenError::InvalidRoster(m) => ServiceError::ValidationFailed(vec![format!("roster: {m}")]),
            GenError::InvalidRequest(m) => ServiceError::ValidationFailed(vec![m]),
            GenError::BackendUnavailable(m) => ServiceError::BackendUnavailable(m),
            e @ GenError::DiversityExhausted { .. } => ServiceError::Generation(e.to_string()),
        }
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
