use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use rand::Rng;
use tower_http::services::ServeDir;

use super::store::{RatingError, RatingStore, StoreError};
use super::{presentation_order, Dimension, EvalItem, RatingRecord};

/// Rubric text served to raters.
pub const RUBRIC: &str = include_str!("../../templates/rubric.v1.txt");

pub struct ReviewState {
    pub store: RatingStore,
    /// Bearer token → evaluator id.
    pub tokens: HashMap<String, String>,
    /// Seed for per-rater presentation order.
    pub order_seed: u64,
}

#[derive(Debug, Deserialize)]
struct ItemsQuery {
    evaluator: String,
}

#[derive(Debug, Serialize)]
struct AssignedItem<'a> {
    #[serde(flatten)]
    item: &'a EvalItem,
    dimensions: Vec<Dimension>,
    rated: BTreeMap<Dimension, i64>,
}

fn error(status: StatusCode, class: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": class, "message": message.into()}))).into_response()
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

/// The evaluator behind the request's token, if the token is known.
#[allow(clippy::result_large_err)]
fn authenticate<'a>(state: &'a ReviewState, headers: &HeaderMap) -> Result<&'a str, Response> {
    bearer(headers)
        .and_then(|t| state.tokens.get(t))
        .map(String::as_str)
        .ok_or_else(|| error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token"))
}

async fn items(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
    Query(query): Query<ItemsQuery>,
) -> Response {
    let evaluator = match authenticate(&state, &headers) {
        Ok(e) => e,
        Err(r) => return r,
    };
    if evaluator != query.evaluator {
        return error(StatusCode::FORBIDDEN, "forbidden", "token does not belong to this evaluator");
    }
    let mut rated = state.store.rated_by(evaluator);
    let ordered = presentation_order(state.store.items(), evaluator, state.order_seed);
    let list: Vec<AssignedItem> = ordered
        .into_iter()
        .map(|item| AssignedItem {
            item,
            dimensions: Dimension::for_method(item.method),
            rated: rated.remove(&item.item_id).unwrap_or_default(),
        })
        .collect();
    let complete = list
        .iter()
        .filter(|i| i.rated.len() == i.dimensions.len())
        .count();
    Json(json!({
        "evaluator": evaluator,
        "assigned": list.len(),
        "complete": complete,
        "items": list,
    }))
    .into_response()
}

async fn submit(
    State(state): State<Arc<ReviewState>>,
    headers: HeaderMap,
    Json(rating): Json<RatingRecord>,
) -> Response {
    let evaluator = match authenticate(&state, &headers) {
        Ok(e) => e,
        Err(r) => return r,
    };
    if evaluator != rating.evaluator_id {
        return error(StatusCode::FORBIDDEN, "forbidden", "token does not belong to this evaluator");
    }
    match state.store.submit(rating) {
        Ok(outcome) => (StatusCode::CREATED, Json(json!({"status": outcome}))).into_response(),
        Err(StoreError::Rating(e)) => {
            let status = match e {
                RatingError::UnknownItem(_) => StatusCode::NOT_FOUND,
                RatingError::NotAssigned { .. } => StatusCode::FORBIDDEN,
                RatingError::Inapplicable { .. } | RatingError::ScoreOutOfRange(_) => {
                    StatusCode::UNPROCESSABLE_ENTITY
                }
            };
            error(status, e.class(), e.to_string())
        }
        Err(e) => {
            tracing::error!(error = %e, "failed to persist rating");
            error(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
        }
    }
}

async fn summary(State(state): State<Arc<ReviewState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authenticate(&state, &headers) {
        return r;
    }
    Json(state.store.summary()).into_response()
}

async fn rubric() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], RUBRIC)
}

/// API routes, plus the rater UI from `static_dir` when given.
/// One random 128-bit bearer token per evaluator, keyed by token.
pub fn issue_tokens(evaluators: &[String]) -> BTreeMap<String, String> {
    let mut rng = rand::rng();
    evaluators
        .iter()
        .map(|e| (hex::encode(rng.random::<[u8; 16]>()), e.clone()))
        .collect()
}

pub fn router(state: Arc<ReviewState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/items", get(items))
        .route("/api/ratings", post(submit))
        .route("/api/summary", get(summary))
        .route("/api/rubric", get(rubric))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the review API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ReviewState>,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
