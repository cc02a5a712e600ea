//! Out-of-band HTTP surface: the four /resources/{id} routes plus the
//! discovery document. The route table below is the single source of truth;
//! both the well-known document and the axum router are generated from it,
//! so the advertisement cannot drift from what is actually served.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::header::AUTHORIZATION;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::MethodRouter;
use axum::{Extension, Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::model::{SortOrder, TenantContext};
use crate::server::AppState;
use crate::store::{StoreError, DEFAULT_PAGE_LIMIT, MAX_PAGE_LIMIT};

pub const WELL_KNOWN_PATH: &str = "/.well-known/resource-link-service";

#[derive(Debug, Clone, Copy)]
pub struct RouteSpec {
    /// Key under `methods` in the discovery document.
    pub name: &'static str,
    pub method: &'static str,
    /// Relative to the resource base URL; also a literal axum route.
    pub path: &'static str,
    pub accepts: Option<&'static [&'static str]>,
}

pub const ROUTES: [RouteSpec; 4] = [
    RouteSpec { name: "metadata", method: "GET", path: "/{id}", accepts: None },
    RouteSpec {
        name: "data",
        method: "POST",
        path: "/{id}",
        accepts: Some(&["offset", "limit", "sort"]),
    },
    RouteSpec { name: "save", method: "PUT", path: "/{id}", accepts: None },
    RouteSpec { name: "delete", method: "DELETE", path: "/{id}", accepts: None },
];

pub fn well_known_document() -> serde_json::Value {
    let mut methods = serde_json::Map::new();
    for route in &ROUTES {
        let mut entry = serde_json::Map::new();
        entry.insert("method".into(), route.method.into());
        entry.insert("path".into(), route.path.into());
        if let Some(accepts) = route.accepts {
            entry.insert("accepts".into(), accepts.iter().copied().collect());
        }
        methods.insert(route.name.into(), entry.into());
    }
    serde_json::json!({ "methods": methods })
}

/// Error envelope for every non-2xx resource response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_sort_fields: Option<Vec<String>>,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>, message: impl Into<String>) -> Self {
        Self { error: error.into(), message: message.into(), valid_sort_fields: None }
    }
}

pub fn store_error_response(err: StoreError) -> Response {
    let (status, body) = match err {
        StoreError::NotFound => {
            (StatusCode::NOT_FOUND, ErrorBody::new("not_found", "resource not found"))
        }
        StoreError::Gone => {
            (StatusCode::GONE, ErrorBody::new("gone", "resource has expired"))
        }
        StoreError::Forbidden => {
            (StatusCode::FORBIDDEN, ErrorBody::new("forbidden", "manage scope required"))
        }
        StoreError::Validation { message, valid_sort_fields } => (
            StatusCode::BAD_REQUEST,
            ErrorBody { error: "validation".into(), message, valid_sort_fields },
        ),
        StoreError::Capacity => (
            StatusCode::SERVICE_UNAVAILABLE,
            ErrorBody::new("capacity", "resource capacity reached"),
        ),
        StoreError::Engine(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorBody::new("internal", e.to_string()),
        ),
    };
    (status, Json(body)).into_response()
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody::new("validation", message))).into_response()
}

/// Rejects with 401 before any handler touches the store.
pub async fn require_auth(
    State(state): State<Arc<AppState>>,
    mut request: axum::extract::Request,
    next: Next,
) -> Response {
    let header =
        request.headers().get(AUTHORIZATION).and_then(|value| value.to_str().ok());
    match state.tokens.authorize(header) {
        Ok(ctx) => {
            request.extensions_mut().insert(ctx);
            next.run(request).await
        }
        Err(e) => (
            StatusCode::UNAUTHORIZED,
            Json(ErrorBody::new("unauthorized", e.to_string())),
        )
            .into_response(),
    }
}

/// Body of POST /resources/{id}. Integers parse as i64 so negative values
/// reach our validation instead of a serde type error.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PageRequest {
    #[serde(default)]
    offset: Option<i64>,
    #[serde(default)]
    limit: Option<i64>,
    #[serde(default)]
    sort: Option<SortSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SortSpec {
    field: String,
    #[serde(default)]
    order: SortOrder,
}

async fn metadata_handler(
    State(state): State<Arc<AppState>>,
    Extension(ctx): Extension<TenantContext>,
    Path(id): Path<String>,
) -> Response {
    match state.store.get_metadata(&id, &ctx, Utc::now()) {
        Ok(metadata) => Json(metadata).into_response(),
        Err(e) => store_error_response(e),
    }
}

async fn data_handler(
    State(state): State<Arc<AppState>>,
    Extension(ctx): Extension<TenantContext>,
    Path(id): Path<String>,
    body: Bytes,
) -> Response {
    // an empty body means "all defaults", same as {}
    let request: PageRequest = if body.is_empty() {
        PageRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(request) => request,
            Err(e) => return bad_request(format!("malformed request body: {e}")),
        }
    };
    let offset = request.offset.unwrap_or(0);
    if offset < 0 {
        return bad_request("offset must not be negative");
    }
    let limit = request.limit.unwrap_or(DEFAULT_PAGE_LIMIT as i64);
    if limit < 1 || limit > MAX_PAGE_LIMIT as i64 {
        return bad_request(format!("limit must be between 1 and {MAX_PAGE_LIMIT}"));
    }
    let sort = request.sort.map(|s| (s.field, s.order));
    match state.store.fetch_page(&id, &ctx, offset as u64, limit as u64, sort, Utc::now()) {
        Ok(page) => Json(page).into_response(),
        Err(e) => store_error_response(e),
    }
}

async fn save_handler(
    State(state): State<Arc<AppState>>,
    Extension(ctx): Extension<TenantContext>,
    Path(id): Path<String>,
) -> Response {
    match state.store.pin(&id, &ctx, Utc::now()) {
        Ok(metadata) => Json(metadata).into_response(),
        Err(e) => store_error_response(e),
    }
}

async fn delete_handler(
    State(state): State<Arc<AppState>>,
    Extension(ctx): Extension<TenantContext>,
    Path(id): Path<String>,
) -> Response {
    match state.store.delete(&id, &ctx) {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => store_error_response(e),
    }
}

async fn well_known_handler() -> Response {
    Json(well_known_document()).into_response()
}

pub fn well_known_router() -> Router<Arc<AppState>> {
    Router::new().route(WELL_KNOWN_PATH, axum::routing::get(well_known_handler))
}

/// Builds the authenticated /resources router from the route table. Every
/// entry must map to a handler; an uncovered name is a startup panic, not a
/// silent 404.
pub fn resources_router(state: Arc<AppState>) -> Router<Arc<AppState>> {
    let mut router = Router::new();
    let mut pending: Option<(&str, MethodRouter<Arc<AppState>>)> = None;
    for route in &ROUTES {
        let handler: MethodRouter<Arc<AppState>> = match route.name {
            "metadata" => axum::routing::get(metadata_handler),
            "data" => axum::routing::post(data_handler),
            "save" => axum::routing::put(save_handler),
            "delete" => axum::routing::delete(delete_handler),
            other => panic!("route table entry '{other}' has no handler"),
        };
        pending = Some(match pending {
            Some((path, merged)) if path == route.path => (path, merged.merge(handler)),
            Some((path, merged)) => {
                router = router.route(path, merged);
                (route.path, handler)
            }
            None => (route.path, handler),
        });
    }
    if let Some((path, merged)) = pending {
        router = router.route(path, merged);
    }
    router.layer(middleware::from_fn_with_state(state, require_auth))
}
