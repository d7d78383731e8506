//! JSON-over-HTTP API for the workbench and for scripts.
//!
//! Artifacts are loaded once in [`AppState::load`]; handlers only read them.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use meshforge::eval::{evaluate_topic, EvalReport, Qrels};
use meshforge::fragment::fragment;
use meshforge::pipeline::{
    parse_record, rebuild, FragmentInfo, FragmentRun, Pipeline, PipelineConfig, Representation, Resources,
};
use meshforge::query::QueryNode;
use meshforge::retrieval::CorpusIndex;

use crate::commands::strategy_override;
use crate::error::CliError;

pub struct AppState {
    pub config: PipelineConfig,
    pub resources: Resources,
    pub pipeline: Pipeline,
    pub index: Option<CorpusIndex>,
    pub qrels: Option<Qrels>,
}

impl AppState {
    /// Loads every artifact `config` names.
    pub fn load(config: PipelineConfig) -> Result<Self, CliError> {
        config.validate()?;
        config.check_files()?;
        let resources = Resources::load(&config.paths)?;
        let index = match &config.paths.corpus {
            Some(p) => Some(
                CorpusIndex::load(p, resources.thesaurus.as_deref())
                    .map_err(|e| CliError::new("invalid_input", format!("corpus: {e}")))?,
            ),
            None => None,
        };
        let qrels = match &config.paths.qrels {
            Some(p) => Some(Qrels::load(p).map_err(|e| CliError::new("invalid_input", format!("qrels: {e}")))?),
            None => None,
        };
        Self::new(config, resources, index, qrels)
    }

    pub fn new(
        config: PipelineConfig,
        resources: Resources,
        index: Option<CorpusIndex>,
        qrels: Option<Qrels>,
    ) -> Result<Self, CliError> {
        let pipeline = Pipeline::new(config.clone(), resources.clone())?;
        Ok(AppState { config, resources, pipeline, index, qrels })
    }
}

pub struct ApiError(CliError);

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        ApiError(e)
    }
}

impl From<meshforge::pipeline::PipelineError> for ApiError {
    fn from(e: meshforge::pipeline::PipelineError) -> Self {
        ApiError(e.into())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(CliError::new("bad_request", e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.code {
            "bad_request" | "parse_error" | "invalid_config" | "usage" | "invalid_input" => StatusCode::BAD_REQUEST,
            "empty_query" => StatusCode::UNPROCESSABLE_ENTITY,
            "unknown_topic" => StatusCode::NOT_FOUND,
            "no_corpus" => StatusCode::SERVICE_UNAVAILABLE,
            "suggester_failed" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub query: String,
}

#[derive(Debug, Serialize)]
pub struct FragmentResponse {
    pub fragments: Vec<FragmentInfo>,
}

/// Per-request changes to the loaded pipeline config.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub representation: Option<Representation>,
    pub strategy: Option<String>,
    pub kappa: Option<f64>,
    pub top_k: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct SuggestRequest {
    pub query: String,
    #[serde(default)]
    pub config: Option<ConfigOverrides>,
}

#[derive(Debug, Serialize)]
pub struct SuggestResponse {
    pub fragments: Vec<FragmentRun>,
}

#[derive(Debug, Deserialize)]
pub struct DefragmentRequest {
    pub query: String,
    /// Fragment index to accepted headings, in order.
    #[serde(default)]
    pub accepted: BTreeMap<usize, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DefragmentResponse {
    pub query: String,
}

#[derive(Debug, Deserialize)]
pub struct EvaluateRequest {
    pub query: String,
    pub topic: String,
    /// Suggested headings for the overlap measure; defaults to none.
    #[serde(default)]
    pub suggested: Vec<String>,
    /// Reference headings for the overlap measure; defaults to none.
    #[serde(default)]
    pub original_mesh: Vec<String>,
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn config(State(s): State<Arc<AppState>>) -> Json<PipelineConfig> {
    Json(s.config.clone())
}

async fn parse(body: Result<Json<QueryRequest>, JsonRejection>) -> ApiResult<QueryNode> {
    let Json(req) = body?;
    Ok(Json(parse_record("query", &req.query)?))
}

async fn fragment_handler(body: Result<Json<QueryRequest>, JsonRejection>) -> ApiResult<FragmentResponse> {
    let Json(req) = body?;
    let q = parse_record("query", &req.query)?;
    Ok(Json(FragmentResponse { fragments: fragment(&q).iter().map(FragmentInfo::from).collect() }))
}

fn suggest_blocking(state: &AppState, req: SuggestRequest) -> Result<SuggestResponse, ApiError> {
    let q = parse_record("query", &req.query)?;
    let run = match req.config {
        None => state.pipeline.suggest_query("query", &q)?,
        Some(o) => {
            let mut cfg = state.config.clone();
            if let Some(r) = o.representation {
                cfg.representation = r;
            }
            cfg.refinement = strategy_override(cfg.refinement, o.strategy.as_deref(), o.kappa)?;
            if let Some(k) = o.top_k {
                cfg.top_k = k;
            }
            if let Some(t) = o.threshold {
                cfg.threshold = t;
            }
            Pipeline::new(cfg, state.resources.clone())?.suggest_query("query", &q)?
        }
    };
    Ok(SuggestResponse { fragments: run.fragments })
}

async fn suggest(State(s): State<Arc<AppState>>, body: Result<Json<SuggestRequest>, JsonRejection>) -> ApiResult<SuggestResponse> {
    let Json(req) = body?;
    let out = tokio::task::spawn_blocking(move || suggest_blocking(&s, req))
        .await
        .map_err(|e| ApiError(CliError::new("internal", e.to_string())))??;
    Ok(Json(out))
}

async fn defragment(body: Result<Json<DefragmentRequest>, JsonRejection>) -> ApiResult<DefragmentResponse> {
    let Json(req) = body?;
    let q = parse_record("query", &req.query)?;
    let selected: Vec<(usize, Vec<String>)> = req.accepted.into_iter().collect();
    let rebuilt = rebuild("query", &q, &selected)?;
    Ok(Json(DefragmentResponse { query: rebuilt.to_query_string() }))
}

fn evaluate_blocking(state: &AppState, req: EvaluateRequest) -> Result<EvalReport, ApiError> {
    let (Some(index), Some(qrels)) = (&state.index, &state.qrels) else {
        return Err(ApiError(CliError::new("no_corpus", "service was started without a corpus and qrels")));
    };
    let rel = qrels
        .relevant(&req.topic)
        .ok_or_else(|| ApiError(CliError::new("unknown_topic", format!("no qrels for topic {}", req.topic))))?;
    let q = parse_record(&req.topic, &req.query)?;
    let retrieved = index.execute(&q, state.config.date_limit);
    Ok(evaluate_topic(&req.topic, &retrieved, rel, &req.suggested, &req.original_mesh, state.config.f_formula))
}

async fn evaluate(State(s): State<Arc<AppState>>, body: Result<Json<EvaluateRequest>, JsonRejection>) -> ApiResult<EvalReport> {
    let Json(req) = body?;
    let out = tokio::task::spawn_blocking(move || evaluate_blocking(&s, req))
        .await
        .map_err(|e| ApiError(CliError::new("internal", e.to_string())))??;
    Ok(Json(out))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/parse", post(parse))
        .route("/fragment", post(fragment_handler))
        .route("/suggest", post(suggest))
        .route("/defragment", post(defragment))
        .route("/evaluate", post(evaluate))
        .with_state(state)
}

pub async fn serve(state: AppState, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
