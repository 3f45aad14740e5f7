//! HTTP front of the survey: session creation, the two pages per item and
//! an admin export. Payloads never name the source of a summary.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use distill_core::stats::Choice;
use serde::{Deserialize, Serialize};

use crate::survey::{
    create_session, ItemState, StudyPool, SurveyError, SurveyStore, ITEMS_PER_SESSION, LIKERT_OPTIONS,
    PREFERENCE_OPTIONS, PREFERENCE_QUESTION, QUESTIONS,
};

pub struct AppState {
    pub pool: StudyPool,
    /// All writes go through this one lock.
    pub store: Mutex<SurveyStore>,
    pub admin_token: String,
    seed: u64,
    created: AtomicU64,
}

impl AppState {
    pub fn new(pool: StudyPool, store: SurveyStore, admin_token: impl Into<String>, seed: u64) -> Self {
        let created = store.sessions().count() as u64;
        Self {
            pool,
            store: Mutex::new(store),
            admin_token: admin_token.into(),
            seed,
            created: AtomicU64::new(created),
        }
    }

    fn store(&self) -> std::sync::MutexGuard<'_, SurveyStore> {
        // a panicked writer leaves every committed event on disk
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub struct ApiError(StatusCode, String);

impl From<SurveyError> for ApiError {
    fn from(e: SurveyError) -> Self {
        let status = match &e {
            SurveyError::UnknownSession | SurveyError::UnknownItem(_) => StatusCode::NOT_FOUND,
            SurveyError::Duplicate(_) | SurveyError::PageOrder(_) | SurveyError::DuplicateSession(_) => {
                StatusCode::CONFLICT
            }
            SurveyError::InvalidLikert(_) | SurveyError::MissingRationale | SurveyError::InvalidTiming => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    pub participant: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub token: String,
    pub item_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Progress {
    pub item_count: usize,
    pub answered: usize,
    pub next_item: Option<usize>,
    pub completion_code: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageOneView {
    pub item: usize,
    pub item_count: usize,
    pub code: String,
    pub summary: String,
    pub questions: Vec<String>,
    pub options: Vec<String>,
    pub state: ItemState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageOneSubmit {
    /// Accurate, complete, concise; 4 = Strongly Agree.
    pub answers: [u8; 3],
    pub elapsed_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageTwoView {
    pub item: usize,
    pub item_count: usize,
    pub code: String,
    pub summary_1: String,
    pub summary_2: String,
    pub question: String,
    pub options: Vec<String>,
    pub state: ItemState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageTwoSubmit {
    pub preference: Choice,
    pub rationale: String,
    pub elapsed_seconds: f64,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", post(new_session))
        .route("/api/session/{token}", get(progress))
        .route("/api/session/{token}/item/{n}/page1", get(page_one).post(submit_page_one))
        .route("/api/session/{token}/item/{n}/page2", get(page_two).post(submit_page_two))
        .route("/api/export", get(export))
        .with_state(state)
}

fn completion_code(token: &str) -> String {
    format!("DONE-{}", token.chars().take(8).collect::<String>().to_uppercase())
}

async fn new_session(
    State(st): State<Arc<AppState>>,
    Json(req): Json<NewSession>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let ids = st.pool.method_ids();
    let mut store = st.store();
    // retry on the (unlikely) id collision with an existing session
    loop {
        let k = st.created.fetch_add(1, Ordering::SeqCst);
        let seed = st.seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let s = create_session(&req.participant, &ids, &st.pool.sources, seed)?;
        let token = s.session_id.clone();
        match store.add_session(s) {
            Ok(()) => {
                return Ok((
                    StatusCode::CREATED,
                    Json(SessionCreated {
                        token,
                        item_count: ITEMS_PER_SESSION,
                    }),
                ))
            }
            Err(SurveyError::DuplicateSession(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
}

fn progress_of(store: &SurveyStore, token: &str) -> Result<Progress, SurveyError> {
    let s = store.session(token)?;
    let mut answered = 0;
    let mut next = None;
    for n in 1..=s.items.len() {
        if store.item_state(token, n)? == ItemState::Done {
            answered += 1;
        } else if next.is_none() {
            next = Some(n);
        }
    }
    Ok(Progress {
        item_count: s.items.len(),
        answered,
        next_item: next,
        completion_code: next.is_none().then(|| completion_code(token)),
    })
}

async fn progress(State(st): State<Arc<AppState>>, Path(token): Path<String>) -> ApiResult<Progress> {
    Ok(Json(progress_of(&st.store(), &token)?))
}

fn summaries(st: &AppState, token: &str, n: usize) -> Result<(String, String, String, ItemState), SurveyError> {
    let store = st.store();
    let a = store.session(token)?.item(n)?.clone();
    let state = store.item_state(token, n)?;
    drop(store);
    let item = st.pool.get(&a.method_id).ok_or(SurveyError::UnknownItem(n))?;
    let text = |src: &str| item.summaries.get(src).cloned().unwrap_or_default();
    Ok((item.code.clone(), text(&a.first_source), text(&a.second_source), state))
}

async fn page_one(State(st): State<Arc<AppState>>, Path((token, n)): Path<(String, usize)>) -> ApiResult<PageOneView> {
    let (code, summary, _, state) = summaries(&st, &token, n)?;
    Ok(Json(PageOneView {
        item: n,
        item_count: ITEMS_PER_SESSION,
        code,
        summary,
        questions: QUESTIONS.iter().map(|q| q.to_string()).collect(),
        options: LIKERT_OPTIONS.iter().map(|o| o.to_string()).collect(),
        state,
    }))
}

async fn submit_page_one(
    State(st): State<Arc<AppState>>,
    Path((token, n)): Path<(String, usize)>,
    Json(req): Json<PageOneSubmit>,
) -> ApiResult<Progress> {
    let mut store = st.store();
    store.record_page_one(&token, n, req.answers, req.elapsed_seconds)?;
    Ok(Json(progress_of(&store, &token)?))
}

async fn page_two(State(st): State<Arc<AppState>>, Path((token, n)): Path<(String, usize)>) -> ApiResult<PageTwoView> {
    let (code, summary_1, summary_2, state) = summaries(&st, &token, n)?;
    if state == ItemState::Fresh {
        return Err(SurveyError::PageOrder(n).into());
    }
    Ok(Json(PageTwoView {
        item: n,
        item_count: ITEMS_PER_SESSION,
        code,
        summary_1,
        summary_2,
        question: PREFERENCE_QUESTION.to_string(),
        options: PREFERENCE_OPTIONS.iter().map(|o| o.to_string()).collect(),
        state,
    }))
}

async fn submit_page_two(
    State(st): State<Arc<AppState>>,
    Path((token, n)): Path<(String, usize)>,
    Json(req): Json<PageTwoSubmit>,
) -> ApiResult<Progress> {
    let mut store = st.store();
    store.record_page_two(&token, n, req.preference, &req.rationale, req.elapsed_seconds)?;
    Ok(Json(progress_of(&store, &token)?))
}

async fn export(State(st): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    let expected = format!("Bearer {}", st.admin_token);
    let ok = !st.admin_token.is_empty()
        && headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == expected);
    if !ok {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "admin token required".into()));
    }
    let mut buf = Vec::new();
    st.store().export(&mut buf)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
