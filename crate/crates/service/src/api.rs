//! JSON routes for the review workbench, plus static serving of the UI.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use traffic_mtl::equiv::{canonicalize_lenient, SwapSet};
use traffic_mtl::evaluation::{DatasetFormatError, EvalReport, RuleRecord};
use traffic_mtl::llm::{CompletionProvider, LlmError, SamplingConfig};
use traffic_mtl::pipeline::{translate, TranslationResult};
use traffic_mtl::prompting::{check_vocabulary, PredicateSpec, PromptConfig, PromptError, PromptMode, VocabViolation};
use traffic_mtl::semantics::{monitor, Trace, Verdict};
use traffic_mtl::{parse_formula, Formula, ParseError};

use crate::store::{ReviewEntry, ReviewStatus, ReviewStore, ReviewUpdate, StoreError};
use crate::workflow::{resolve_rule_id, run_eval, EvalInputs, WorkflowError};

/// Shared state behind every handler.
pub struct AppState {
    pub store: ReviewStore,
    pub provider: Arc<dyn CompletionProvider>,
    pub prompts: PromptConfig,
    pub swaps: SwapSet,
    /// Known rules, used to resolve rule ids from submitted text.
    pub dataset: Vec<RuleRecord>,
    pub sampling: SamplingConfig,
}

/// Error body: `{code, message, offset?}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    offset: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            offset: None,
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn parse(e: ParseError) -> Self {
        ApiError {
            offset: Some(e.offset),
            ..Self::bad_request("parse_error", e.to_string())
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"code": self.code, "message": self.message});
        if let Some(offset) = self.offset {
            body["offset"] = json!(offset);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            StoreError::IllegalTransition { .. } => ApiError::new(StatusCode::CONFLICT, "illegal_transition", e.to_string()),
            StoreError::InvalidFormula { offset, .. } => ApiError {
                offset: Some(offset),
                ..ApiError::bad_request("parse_error", e.to_string())
            },
            StoreError::InvalidUpdate(_) => ApiError::bad_request("invalid_update", e.to_string()),
            StoreError::StoreCorrupt { .. } | StoreError::Io(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidSampling(_) => ApiError::bad_request("invalid_sampling", e.to_string()),
            LlmError::FixtureFormat { .. } => ApiError::bad_request("fixture_format", e.to_string()),
            LlmError::FixtureIo { .. } => ApiError::bad_request("unreadable_path", e.to_string()),
            LlmError::FixtureMiss { .. } => ApiError::new(StatusCode::BAD_GATEWAY, "fixture_miss", e.to_string()),
            _ => ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string()),
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Dataset(DatasetFormatError::Io { .. }) => ApiError::bad_request("unreadable_path", e.to_string()),
            WorkflowError::Dataset(_) => ApiError::bad_request("dataset_format", e.to_string()),
            WorkflowError::Prompt(e) => e.into(),
            WorkflowError::Llm(e) => e.into(),
        }
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        ApiError::internal(e.to_string())
    }
}

/// JSON body whose rejections use the error body format.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(ApiJson(value)),
            Err(rejection) => Err(malformed(rejection)),
        }
    }
}

fn malformed(rejection: JsonRejection) -> ApiError {
    ApiError::bad_request("malformed_body", rejection.body_text())
}

async fn blocking<T: Send + 'static>(job: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(job)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Builds the router; `ui_dir`, when given, is served for non-API paths.
pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/translate", post(translate_rule))
        .route("/api/reviews", get(list_reviews))
        .route("/api/reviews/{id}", get(get_review).post(update_review))
        .route("/api/monitor", post(monitor_trace))
        .route("/api/parse", post(parse_text))
        .route("/api/predicates", get(predicates))
        .route("/api/eval", post(eval))
        .route("/api/{*rest}", any(unknown_route))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn unknown_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslateRequest {
    rule_text: String,
    #[serde(default)]
    mode: Option<PromptMode>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    rule_id: Option<String>,
}

#[derive(Serialize)]
struct TranslateResponse {
    review_id: u64,
    status: ReviewStatus,
    #[serde(flatten)]
    result: TranslationResult,
}

async fn translate_rule(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<TranslateRequest>,
) -> Result<Json<TranslateResponse>, ApiError> {
    if req.rule_text.trim().is_empty() {
        return Err(ApiError::bad_request("malformed_body", "rule_text is empty"));
    }
    blocking(move || {
        let rule_id = resolve_rule_id(req.rule_id.as_deref(), &req.rule_text, &state.dataset);
        let prompts = match req.mode {
            Some(mode) => state.prompts.clone().with_mode(mode),
            None => state.prompts.clone(),
        };
        let sampling = SamplingConfig {
            samples_per_rule: req.samples.unwrap_or(state.sampling.samples_per_rule),
            ..state.sampling.clone()
        };
        let result = translate(&rule_id, &req.rule_text, &prompts, state.provider.as_ref(), &sampling, &state.swaps)
            .map_err(WorkflowError::from)?;
        let entry = state.store.create(result)?;
        Ok(TranslateResponse {
            review_id: entry.id,
            status: entry.status,
            result: entry.result,
        })
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
}

async fn list_reviews(
    State(state): State<Arc<AppState>>,
    Query(query): Query<ListQuery>,
) -> Result<Json<Vec<ReviewEntry>>, ApiError> {
    let status = match query.status.as_deref() {
        None | Some("") => None,
        Some(s) => Some(s.parse::<ReviewStatus>().map_err(|e| ApiError::bad_request("malformed_query", e))?),
    };
    Ok(Json(state.store.list(status)))
}

fn review_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no review with id {raw}")))
}

async fn get_review(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<ReviewEntry>, ApiError> {
    let id = review_id(&id)?;
    state.store.get(id).map(Json).ok_or_else(|| StoreError::NotFound(id).into())
}

async fn update_review(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    ApiJson(update): ApiJson<ReviewUpdate>,
) -> Result<Json<ReviewEntry>, ApiError> {
    let id = review_id(&id)?;
    blocking(move || Ok(state.store.update(id, update)?)).await.map(Json)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MonitorRequest {
    formula: String,
    trace: serde_json::Value,
}

#[derive(Serialize)]
struct MonitorResponse {
    #[serde(flatten)]
    verdict: Verdict,
    formula_text: String,
}

async fn monitor_trace(ApiJson(req): ApiJson<MonitorRequest>) -> Result<Json<MonitorResponse>, ApiError> {
    let formula = parse_formula(&req.formula).map_err(ApiError::parse)?;
    let trace = Trace::from_json(&req.trace.to_string()).map_err(|e| ApiError::bad_request("trace_format", e.to_string()))?;
    Ok(Json(MonitorResponse {
        formula_text: formula.to_string(),
        verdict: monitor(&formula, &trace),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParseRequest {
    formula: String,
}

#[derive(Serialize)]
struct ParseResponse {
    printed: String,
    canonical: String,
    ast: Formula,
    vocab_violations: Vec<VocabViolation>,
}

/// Validation for the formula editor.
async fn parse_text(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<ParseRequest>,
) -> Result<Json<ParseResponse>, ApiError> {
    let f = parse_formula(&req.formula).map_err(ApiError::parse)?;
    Ok(Json(ParseResponse {
        printed: f.to_string(),
        canonical: canonicalize_lenient(&f, &state.swaps).to_string(),
        vocab_violations: check_vocabulary(&f, &state.prompts.predicate_vocabulary),
        ast: f,
    }))
}

#[derive(Serialize)]
struct PredicatesResponse {
    predicates: Vec<PredicateSpec>,
}

async fn predicates(State(state): State<Arc<AppState>>) -> Json<PredicatesResponse> {
    Json(PredicatesResponse {
        predicates: state.prompts.predicate_vocabulary.clone(),
    })
}

/// Inputs are given inline or as server-side paths, one of each.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRequest {
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    dataset_path: Option<PathBuf>,
    #[serde(default)]
    fixtures: Option<String>,
    #[serde(default)]
    fixtures_path: Option<PathBuf>,
    #[serde(default)]
    exclude: Option<String>,
    #[serde(default)]
    exclude_path: Option<PathBuf>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    mode: Option<PromptMode>,
}

fn inline_or_path(name: &str, inline: Option<String>, path: Option<PathBuf>) -> Result<Option<String>, ApiError> {
    match (inline, path) {
        (Some(_), Some(_)) => Err(ApiError::bad_request(
            "malformed_body",
            format!("give either {name} or {name}_path, not both"),
        )),
        (Some(text), None) => Ok(Some(text)),
        (None, Some(path)) => std::fs::read_to_string(&path)
            .map(Some)
            .map_err(|e| ApiError::bad_request("unreadable_path", format!("cannot read {}: {e}", path.display()))),
        (None, None) => Ok(None),
    }
}

async fn eval(State(state): State<Arc<AppState>>, ApiJson(req): ApiJson<EvalRequest>) -> Result<Json<EvalReport>, ApiError> {
    blocking(move || {
        let missing = |name: &str| ApiError::bad_request("malformed_body", format!("{name} or {name}_path is required"));
        let inputs = EvalInputs {
            dataset: inline_or_path("dataset", req.dataset, req.dataset_path)?.ok_or_else(|| missing("dataset"))?,
            fixtures: inline_or_path("fixtures", req.fixtures, req.fixtures_path)?.ok_or_else(|| missing("fixtures"))?,
            exclude: inline_or_path("exclude", req.exclude, req.exclude_path)?,
            sampling: SamplingConfig {
                samples_per_rule: req.samples.unwrap_or(state.sampling.samples_per_rule),
                ..state.sampling.clone()
            },
        };
        let prompts = state.prompts.clone().with_mode(req.mode.unwrap_or_default());
        Ok(run_eval(&inputs, &prompts, &state.swaps)?)
    })
    .await
    .map(Json)
}
