//! JSON-over-HTTP session API.
//!
//! Every route delegates to [`crate::session::Session`]. Sessions live in
//! memory; when a journal path is configured, each successful mutation is
//! appended to it as one JSON line and the journal is replayed on boot.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decision::DecisionClass;
use crate::kb::KnowledgeBase;
use crate::session::{parse_ground, Finding, Session, SessionError};
use crate::lang::parse_proposition;

/// Error body shared by every route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub detail: Value,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError {
            code: "bad_request".into(),
            message: message.into(),
            detail: Value::Null,
            status: 400,
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let (status, detail) = match &e {
            SessionError::UnknownSession(id) => (404, json!({ "session": id })),
            SessionError::UnknownDecision(id) => (404, json!({ "decision": id })),
            SessionError::Malformed(_) | SessionError::InvalidFinding(_) => (400, Value::Null),
            SessionError::NotConfirmed | SessionError::NoCandidates => (409, Value::Null),
            SessionError::Tie(options) => (409, json!({ "options": options })),
            SessionError::NotOpen { decision, state } => (409, json!({ "decision": decision, "state": state })),
            SessionError::Engine(_) => (500, Value::Null),
        };
        ApiError {
            code: e.code().into(),
            message: e.to_string(),
            detail,
            status,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// A mutation as recorded in the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalEntry {
    Create { session: String, at: u64 },
    Finding { session: String, finding: Finding, at: u64 },
    Commit { session: String, decision: String, at: u64 },
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("journal {path}, line {line}: {message}")]
    Replay { path: PathBuf, line: usize, message: String },
}

struct Store {
    sessions: BTreeMap<String, Arc<Mutex<Session>>>,
    next_id: u64,
}

/// Shared server state: the immutable base document and the session table.
pub struct AppState {
    kb: KnowledgeBase,
    classes: Vec<DecisionClass>,
    store: Mutex<Store>,
    journal: Option<Mutex<File>>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AppState {
    pub fn new(kb: KnowledgeBase, classes: Vec<DecisionClass>) -> AppState {
        AppState {
            kb,
            classes,
            store: Mutex::new(Store {
                sessions: BTreeMap::new(),
                next_id: 1,
            }),
            journal: None,
        }
    }

    /// Replays the journal at `path` (if it exists) and appends further
    /// mutations to it.
    pub fn with_journal(kb: KnowledgeBase, classes: Vec<DecisionClass>, path: &Path) -> Result<AppState, JournalError> {
        let mut state = AppState::new(kb, classes);
        let io = |source| JournalError::Io {
            path: path.to_path_buf(),
            source,
        };
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let replay_err = |message: String| JournalError::Replay {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                };
                let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| replay_err(e.to_string()))?;
                state.apply(entry).map_err(|e| replay_err(e.message))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        state.journal = Some(Mutex::new(file));
        Ok(state)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        lock(&self.store)
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }

    fn apply(&self, entry: JournalEntry) -> Result<Value, ApiError> {
        match entry {
            JournalEntry::Create { session, at } => {
                let created = Session::new(session.clone(), self.kb.clone(), self.classes.clone(), at)?;
                let view = created.view();
                let mut store = lock(&self.store);
                if let Some(n) = session.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    store.next_id = store.next_id.max(n + 1);
                }
                store.sessions.insert(session, Arc::new(Mutex::new(created)));
                Ok(json!(view))
            }
            JournalEntry::Finding { session, finding, at } => {
                let s = self.session(&session)?;
                let mut s = lock(&s);
                s.add_finding(finding, at)?;
                Ok(json!(s.view()))
            }
            JournalEntry::Commit { session, decision, at } => {
                let s = self.session(&session)?;
                let mut s = lock(&s);
                Ok(json!(s.commit(&decision, at)?))
            }
        }
    }

    fn record(&self, entry: &JournalEntry) {
        if let Some(journal) = &self.journal {
            let mut file = lock(journal);
            let line = serde_json::to_string(entry).expect("journal entries serialize");
            let _ = writeln!(file, "{line}").and_then(|_| file.flush());
        }
    }

    fn create(&self) -> Result<Value, ApiError> {
        let at = now();
        let mut store = lock(&self.store);
        let id = format!("s{}", store.next_id);
        let session = Session::new(id.clone(), self.kb.clone(), self.classes.clone(), at)?;
        let view = json!(session.view());
        store.next_id += 1;
        store.sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
        self.record(&JournalEntry::Create { session: id, at });
        Ok(view)
    }

    /// Applies a session mutation and journals it under the session lock, so
    /// the order on disk matches the order of application.
    fn mutate(&self, entry: JournalEntry) -> Result<Value, ApiError> {
        let session = match &entry {
            JournalEntry::Finding { session, .. } | JournalEntry::Commit { session, .. } => session.clone(),
            JournalEntry::Create { .. } => return self.create(),
        };
        let handle = self.session(&session)?;
        let mut s = lock(&handle);
        let before = s.revision;
        let out = match &entry {
            JournalEntry::Finding { finding, at, .. } => {
                s.add_finding(finding.clone(), *at)?;
                json!(s.view())
            }
            JournalEntry::Commit { decision, at, .. } => json!(s.commit(decision, *at)?),
            JournalEntry::Create { .. } => unreachable!("handled above"),
        };
        if s.revision != before {
            self.record(&entry);
        }
        Ok(out)
    }
}

#[derive(Debug, Deserialize)]
struct FindingBody {
    proposition: String,
    #[serde(default = "yes")]
    present: bool,
    #[serde(default)]
    id: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct ParseBody {
    text: String,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn create_session(State(app): State<Arc<AppState>>) -> Result<(StatusCode, Json<Value>), ApiError> {
    Ok((StatusCode::CREATED, Json(app.create()?)))
}

async fn get_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let s = app.session(&id)?;
    let s = lock(&s);
    Ok(Json(json!(s.view())))
}

async fn post_finding(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<FindingBody>, JsonRejection>,
) -> ApiResult<Value> {
    let b = body(payload)?;
    let finding = Finding {
        proposition: parse_ground(&b.proposition)?,
        present: b.present,
        id: b.id,
    };
    Ok(Json(app.mutate(JournalEntry::Finding {
        session: id,
        finding,
        at: now(),
    })?))
}

async fn get_arguments(State(app): State<Arc<AppState>>, UrlPath((id, p)): UrlPath<(String, String)>) -> ApiResult<Value> {
    let s = app.session(&id)?;
    let p = parse_ground(&p)?;
    let s = lock(&s);
    Ok(Json(json!(s.arguments(&p)?)))
}

async fn get_decisions(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let s = app.session(&id)?;
    let s = lock(&s);
    Ok(Json(json!(s.decisions_view())))
}

async fn get_options(State(app): State<Arc<AppState>>, UrlPath((id, d)): UrlPath<(String, String)>) -> ApiResult<Value> {
    let s = app.session(&id)?;
    let s = lock(&s);
    Ok(Json(json!(s.options(&d)?)))
}

async fn get_next_question(State(app): State<Arc<AppState>>, UrlPath((id, d)): UrlPath<(String, String)>) -> ApiResult<Value> {
    let s = app.session(&id)?;
    let s = lock(&s);
    Ok(Json(json!(s.next_question(&d)?)))
}

async fn post_commit(State(app): State<Arc<AppState>>, UrlPath((id, d)): UrlPath<(String, String)>) -> ApiResult<Value> {
    Ok(Json(app.mutate(JournalEntry::Commit {
        session: id,
        decision: d,
        at: now(),
    })?))
}

/// Validates proposition syntax for clients without a parser of their own.
async fn post_parse(payload: Result<Json<ParseBody>, JsonRejection>) -> ApiResult<Value> {
    let b = body(payload)?;
    let p = parse_proposition(&b.text).map_err(|e| ApiError::from(SessionError::Malformed(e.message)))?;
    Ok(Json(json!({ "proposition": p.to_string(), "ground": p.is_ground() })))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/parse", post(post_parse))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/findings", post(post_finding))
        .route("/sessions/{id}/propositions/{p}/arguments", get(get_arguments))
        .route("/sessions/{id}/decisions", get(get_decisions))
        .route("/sessions/{id}/decisions/{d}/options", get(get_options))
        .route("/sessions/{id}/decisions/{d}/next-question", get(get_next_question))
        .route("/sessions/{id}/decisions/{d}/commit", post(post_commit))
        .with_state(state)
}

/// Serves the API on an already bound listener until the process exits.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
