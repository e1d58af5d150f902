//! JSON-over-HTTP transport. Every route is listed in [`ROUTES`] with the
//! roles allowed to call it; a middleware rejects anything not listed there.

use std::future::Future;
use std::sync::Arc;

use axum::extract::{FromRequest, MatchedPath, Path, Request, State};
use axum::http::{header, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Extension, Json, Router};
use labassess_core::Role;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::auth::SessionToken;
use crate::error::ServiceError;
use crate::service::{LabService, NewLab, ReportScope};

/// Who may call a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Public,
    Roles(&'static [Role]),
}

#[derive(Debug, Clone, Copy)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub access: Access,
}

const FACULTY: Access = Access::Roles(&[Role::Faculty]);
const STUDENT: Access = Access::Roles(&[Role::Student]);
const ANY_ROLE: Access = Access::Roles(&[Role::Faculty, Role::Student]);

pub const ROUTES: &[RouteSpec] = &[
    RouteSpec { method: "GET", path: "/healthz", access: Access::Public },
    RouteSpec { method: "POST", path: "/login", access: Access::Public },
    RouteSpec { method: "POST", path: "/labs", access: FACULTY },
    RouteSpec { method: "GET", path: "/labs/{id}", access: ANY_ROLE },
    RouteSpec { method: "POST", path: "/labs/{id}/allocate", access: FACULTY },
    RouteSpec { method: "DELETE", path: "/labs/{id}/allocations", access: FACULTY },
    RouteSpec { method: "POST", path: "/labs/{id}/activate", access: FACULTY },
    RouteSpec { method: "POST", path: "/labs/{id}/close", access: FACULTY },
    RouteSpec { method: "GET", path: "/labs/{id}/report", access: FACULTY },
    RouteSpec { method: "GET", path: "/sections/{id}/report", access: FACULTY },
    RouteSpec { method: "GET", path: "/me/labs", access: ANY_ROLE },
    RouteSpec { method: "GET", path: "/me/progress", access: ANY_ROLE },
    RouteSpec { method: "POST", path: "/allocations/{id}/submissions", access: STUDENT },
    RouteSpec { method: "GET", path: "/viva/{id}", access: STUDENT },
    RouteSpec { method: "POST", path: "/viva/{id}/answers", access: STUDENT },
    RouteSpec { method: "POST", path: "/submissions/{id}/override", access: FACULTY },
    RouteSpec { method: "GET", path: "/submissions/{id}/audit", access: FACULTY },
    RouteSpec { method: "GET", path: "/submissions/{id}/export", access: ANY_ROLE },
];

pub fn route_spec(method: &Method, path: &str) -> Option<&'static RouteSpec> {
    ROUTES.iter().find(|r| r.method == method.as_str() && r.path == path)
}

/// Error wrapper that renders as `{code, message, details}`.
#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0.body())).into_response()
    }
}

/// JSON body extractor whose rejections use the structured error body.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(ApiError(ServiceError::ValidationFailed(vec![e.body_text()]))),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Svc = Arc<LabService>;

/// Runs a service call off the async workers; hashing and grading are CPU-bound.
async fn blocking<T, F>(svc: Svc, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&LabService) -> Result<T, ServiceError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&svc)).await {
        Ok(r) => r.map(Json).map_err(ApiError),
        Err(e) => Err(ApiError(ServiceError::Storage(format!("worker failed: {e}")))),
    }
}

fn bearer(req: &Request) -> Option<&str> {
    let value = req.headers().get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

/// Largest request body read when draining a rejected request.
const DRAIN_LIMIT: usize = 1 << 20;

/// Reads the request body before answering, so the client is not cut off
/// halfway through sending it.
async fn reject(req: Request, err: ServiceError) -> Response {
    let _ = axum::body::to_bytes(req.into_body(), DRAIN_LIMIT).await;
    ApiError(err).into_response()
}

async fn authorize(State(svc): State<Svc>, mut req: Request, next: Next) -> Response {
    let Some(path) = req.extensions().get::<MatchedPath>().map(|m| m.as_str().to_string()) else {
        return next.run(req).await;
    };
    let Some(spec) = route_spec(req.method(), &path) else {
        return reject(req, ServiceError::Forbidden { role: "any".into() }).await;
    };
    let Access::Roles(roles) = spec.access else {
        return next.run(req).await;
    };
    let session = match bearer(&req).map(|t| svc.authenticate(t)) {
        Some(Ok(s)) => s,
        _ => return reject(req, ServiceError::Unauthorized).await,
    };
    if !roles.contains(&session.role) {
        return reject(req, ServiceError::Forbidden { role: format!("{:?}", session.role) }).await;
    }
    req.extensions_mut().insert(session);
    next.run(req).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RosterRequest {
    pub roster: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub code_text: String,
    #[serde(default = "default_language")]
    pub language_tag: String,
}

fn default_language() -> String {
    "python".into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub question_index: usize,
    pub answer_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OverrideRequest {
    #[serde(rename = "override")]
    pub value: f64,
    pub reason: String,
}

type Caller = Extension<SessionToken>;

pub fn router(svc: Svc) -> Router {
    Router::new()
        .route("/healthz", get(|State(s): State<Svc>| async move { Json(s.healthz()) }))
        .route(
            "/login",
            post(|State(s): State<Svc>, ApiJson(b): ApiJson<LoginRequest>| async move {
                blocking(s, move |s| s.login(&b.username, &b.password)).await
            }),
        )
        .route(
            "/labs",
            post(|State(s): State<Svc>, Extension(c): Caller, ApiJson(b): ApiJson<NewLab>| async move {
                blocking(s, move |s| s.create_lab(&c, b)).await
            }),
        )
        .route(
            "/labs/{id}",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.get_lab(&c, &id)).await
            }),
        )
        .route(
            "/labs/{id}/allocate",
            post(
                |State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>, ApiJson(b): ApiJson<RosterRequest>| async move {
                    blocking(s, move |s| s.allocate(&c, &id, &b.roster)).await
                },
            ),
        )
        .route(
            "/labs/{id}/allocations",
            delete(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.deallocate(&c, &id)).await
            }),
        )
        .route(
            "/labs/{id}/activate",
            post(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.activate(&c, &id)).await
            }),
        )
        .route(
            "/labs/{id}/close",
            post(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.close(&c, &id)).await
            }),
        )
        .route(
            "/labs/{id}/report",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.class_report(&c, &ReportScope::Lab(id))).await
            }),
        )
        .route(
            "/sections/{id}/report",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.class_report(&c, &ReportScope::Section(id))).await
            }),
        )
        .route(
            "/me/labs",
            get(|State(s): State<Svc>, Extension(c): Caller| async move { blocking(s, move |s| s.my_labs(&c)).await }),
        )
        .route(
            "/me/progress",
            get(|State(s): State<Svc>, Extension(c): Caller| async move {
                blocking(s, move |s| s.my_progress(&c)).await
            }),
        )
        .route(
            "/allocations/{id}/submissions",
            post(
                |State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>, ApiJson(b): ApiJson<SubmitRequest>| async move {
                    blocking(s, move |s| s.submit_code(&c, &id, &b.code_text, &b.language_tag)).await
                },
            ),
        )
        .route(
            "/viva/{id}",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.get_viva(&c, &id)).await
            }),
        )
        .route(
            "/viva/{id}/answers",
            post(
                |State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>, ApiJson(b): ApiJson<AnswerRequest>| async move {
                    blocking(s, move |s| s.answer_viva(&c, &id, b.question_index, &b.answer_text)).await
                },
            ),
        )
        .route(
            "/submissions/{id}/override",
            post(
                |State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>, ApiJson(b): ApiJson<OverrideRequest>| async move {
                    blocking(s, move |s| s.override_score(&c, &id, b.value, &b.reason)).await
                },
            ),
        )
        .route(
            "/submissions/{id}/audit",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.audit_trail(&c, &id)).await
            }),
        )
        .route(
            "/submissions/{id}/export",
            get(|State(s): State<Svc>, Extension(c): Caller, Path(id): Path<String>| async move {
                blocking(s, move |s| s.export(&c, &id)).await
            }),
        )
        .fallback(|| async {
            ApiError(ServiceError::NotFound { kind: "route", id: String::new() }).into_response()
        })
        .route_layer(middleware::from_fn_with_state(svc.clone(), authorize))
        .with_state(svc)
}

/// Serves until `shutdown` resolves, expiring overdue vivas in the
/// background, then flushes the log and writes a snapshot.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Svc,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let svc = svc.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(std::time::Duration::from_secs(15));
            loop {
                tick.tick().await;
                let svc = svc.clone();
                let _ = tokio::task::spawn_blocking(move || {
                    if let Err(e) = svc.sweep_expired() {
                        log::warn!("viva sweep failed: {e}");
                    }
                })
                .await;
            }
        })
    };
    let result = axum::serve(listener, router(svc.clone())).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    svc.flush().map_err(|e| std::io::Error::other(e.to_string()))?;
    result
}
