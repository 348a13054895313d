//! JSON HTTP API over one analyzed model.
//!
//! The analysis is computed once at startup and never changes; only the
//! audit state moves. A single mutex serializes judgments, and each one is
//! synced to the audit file before the response goes out.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use upg_core::audit::{self, AuditError, AuditState, Judgment, JudgmentVerdict};
use upg_core::obligations::{Mode, Obligation};
use upg_core::Analysis;

use crate::{analyze, effective_obligations, load_audit, ServeArgs, EXIT_ERROR, EXIT_OK};

pub struct AppState {
    pub analysis: Analysis,
    pub fingerprint: String,
    pub audit_path: PathBuf,
    audit: Mutex<AuditState>,
}

impl AppState {
    pub fn new(analysis: Analysis, audit_path: PathBuf, state: AuditState) -> Self {
        AppState {
            fingerprint: audit::model_fingerprint(&analysis.model),
            analysis,
            audit_path,
            audit: Mutex::new(state),
        }
    }

    fn obligations(&self) -> Vec<Obligation> {
        let state = self.audit.lock().expect("audit lock");
        let statuses = audit::effective_statuses(&self.analysis.obligations, &state);
        effective_obligations(&self.analysis.obligations, &statuses)
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<AuditError> for ApiError {
    fn from(e: AuditError) -> Self {
        let status = match e {
            AuditError::UnknownObligation(_) => StatusCode::NOT_FOUND,
            AuditError::EmptyJustification => StatusCode::BAD_REQUEST,
            AuditError::StaleFingerprint { .. } => StatusCode::CONFLICT,
            AuditError::Malformed { .. } | AuditError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn model(State(app): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&app.analysis.model).expect("model serializes"))
}

async fn upg_graph(State(app): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&app.analysis.upg).expect("graph serializes"))
}

async fn subgraphs(State(app): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&app.analysis.subgraphs).expect("subgraphs serialize"))
}

async fn obligations(State(app): State<Shared>) -> Json<Vec<Obligation>> {
    Json(app.obligations())
}

#[derive(Deserialize)]
struct VerdictQuery {
    #[serde(default)]
    mode: Mode,
}

async fn verdict(State(app): State<Shared>, Query(q): Query<VerdictQuery>) -> Json<serde_json::Value> {
    let statuses = {
        let state = app.audit.lock().expect("audit lock");
        audit::effective_statuses(&app.analysis.obligations, &state)
    };
    let tree = app.analysis.verdicts(&statuses, q.mode);
    Json(serde_json::to_value(tree).expect("verdict serializes"))
}

#[derive(Deserialize)]
pub struct JudgmentRequest {
    pub id: String,
    pub verdict: JudgmentVerdict,
    pub justification: String,
    pub author: String,
}

#[derive(Serialize)]
struct JudgmentResponse {
    judgment: Judgment,
    obligation: Obligation,
}

async fn post_judgment(
    State(app): State<Shared>,
    Json(req): Json<JudgmentRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let judgment = {
        let mut state = app.audit.lock().expect("audit lock");
        let (next, judgment) = state.mark(
            &app.fingerprint,
            &app.analysis.obligations,
            &req.id,
            req.verdict,
            &req.justification,
            &req.author,
            &audit::now_utc(),
        )?;
        audit::append_judgment(&app.audit_path, &judgment).map_err(|e| {
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("writing {}: {e}", app.audit_path.display()),
            )
        })?;
        *state = next;
        judgment
    };
    let obligation = app
        .obligations()
        .into_iter()
        .find(|o| o.id == judgment.id)
        .expect("marked obligation exists");
    let body = serde_json::to_value(JudgmentResponse { judgment, obligation }).expect("response serializes");
    Ok((StatusCode::CREATED, Json(body)))
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/api/model", get(model))
        .route("/api/upg", get(upg_graph))
        .route("/api/subgraphs", get(subgraphs))
        .route("/api/obligations", get(obligations))
        .route("/api/verdict", get(verdict))
        .route("/api/judgments", post(post_judgment))
        .with_state(app)
}

/// Blocks serving `args` until Ctrl-C.
pub fn serve(args: &ServeArgs, err: &mut dyn Write) -> u8 {
    let Some(path) = args.audit.audit.clone() else {
        let _ = writeln!(err, "error: serve needs a writable audit file; pass --audit or set UPG_AUDIT_FILE");
        return EXIT_ERROR;
    };
    let analysis = match analyze(&args.input, err) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let state = match load_audit(Some(&path), &analysis, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Err(e) = std::fs::OpenOptions::new().create(true).append(true).open(&path) {
        let _ = writeln!(err, "error: audit file {}: {e}", path.display());
        return EXIT_ERROR;
    }
    let app = Arc::new(AppState::new(analysis, path, state));

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let result: Result<(), String> = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|e| format!("cannot listen on {}: {e}", args.addr))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("listening on http://{local}");
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
