//! Lab assessment service: credential login with role-scoped bearer tokens,
//! the lab lifecycle, submission grading and timed vivas, score overrides with
//! an audit trail, class reports, and an event-sourced store that replays to
//! the same state after a crash.

pub mod auth;
pub mod clients;
pub mod clock;
pub mod error;
pub mod http;
pub mod service;
pub mod state;
pub mod store;

pub use auth::SessionToken;
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{ServiceError, ServiceResult};
pub use service::{LabService, NewLab, NewUser, ReportScope, ServiceConfig};
pub use state::{ServiceState, StoredEvent, VivaState};
