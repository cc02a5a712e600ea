//! JSON-RPC 2.0 endpoint exposing the tool set. Dispatch is a plain
//! function over decoded JSON so the protocol behavior is testable without
//! a socket; the axum handler only does auth and framing.
//!
//! Error discipline: anything wrong with the *envelope* (bad JSON-RPC,
//! unknown method, unknown tool) is a protocol error; anything wrong with
//! the *work* (bad SQL, unknown resource, missing argument) is a tool
//! result with isError, so a host can read the message and refine.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::header::AUTHORIZATION;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use serde_json::{json, Map, Value};

use crate::engine::{Database, Table};
use crate::guard::{self, GuardError};
use crate::model::{DualResponseToolResult, TenantContext};
use crate::server::AppState;
use crate::sql::ast::{
    AggregateArg, AggregateFunc, ColumnRef, FromSource, QueryAst, SelectItem, TableRef,
};
use crate::sql::{self, ParseError};
use crate::store::StoreError;

pub const PROTOCOL_VERSION: &str = "2025-06-18";

/// How a host should choose between the preview and the link; embedded in
/// every tool description and in query_help.
const DECISION_RULE: &str = "Analyze preview data directly for questions answerable from \
samples; return the ResourceLink reference for comprehensive reports, exports, or anything \
needing more rows than the preview holds.";

const JSONRPC_PARSE_ERROR: i64 = -32700;
const JSONRPC_INVALID_REQUEST: i64 = -32600;
const JSONRPC_METHOD_NOT_FOUND: i64 = -32601;
const JSONRPC_INVALID_PARAMS: i64 = -32602;

/// A failure inside a tool; rendered as isError content, never as a
/// protocol error.
struct ToolError {
    kind: &'static str,
    message: String,
    position: Option<usize>,
}

impl ToolError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), position: None }
    }
}

impl From<ParseError> for ToolError {
    fn from(e: ParseError) -> Self {
        let kind = match e.kind {
            sql::ParseErrorKind::Syntax => "syntax",
            sql::ParseErrorKind::Unsupported => "unsupported",
            sql::ParseErrorKind::WriteRejected => "write_rejected",
        };
        Self { kind, message: e.to_string(), position: Some(e.position) }
    }
}

impl From<GuardError> for ToolError {
    fn from(e: GuardError) -> Self {
        let kind = match &e {
            GuardError::AccessDenied { .. } => "access_denied",
            GuardError::InvalidTenant { .. } => "invalid_tenant",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<StoreError> for ToolError {
    fn from(e: StoreError) -> Self {
        let kind = match &e {
            StoreError::NotFound => "not_found",
            StoreError::Gone => "gone",
            StoreError::Forbidden => "forbidden",
            StoreError::Validation { .. } => "validation",
            StoreError::Capacity => "capacity",
            StoreError::Engine(_) => "engine",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<crate::engine::EngineError> for ToolError {
    fn from(e: crate::engine::EngineError) -> Self {
        Self::new("engine", e.to_string())
    }
}

fn tool_error_result(e: ToolError) -> Value {
    let mut error = Map::new();
    error.insert("kind".into(), e.kind.into());
    if let Some(position) = e.position {
        error.insert("position".into(), position.into());
    }
    error.insert("message".into(), e.message.clone().into());
    json!({
        "content": [{"type": "text", "text": e.message}],
        "structuredContent": {"error": Value::Object(error)},
        "isError": true
    })
}

pub async fn mcp_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let header = headers.get(AUTHORIZATION).and_then(|value| value.to_str().ok());
    let ctx = match state.tokens.authorize(header) {
        Ok(ctx) => ctx,
        Err(e) => {
            return (
                StatusCode::UNAUTHORIZED,
                Json(crate::rest::ErrorBody::new("unauthorized", e.to_string())),
            )
                .into_response()
        }
    };
    let raw: Value = match serde_json::from_slice(&body) {
        Ok(raw) => raw,
        Err(e) => {
            return Json(rpc_error(
                Value::Null,
                JSONRPC_PARSE_ERROR,
                format!("invalid JSON: {e}"),
            ))
            .into_response()
        }
    };
    match dispatch(&state, &ctx, raw) {
        Some(reply) => Json(reply).into_response(),
        None => StatusCode::ACCEPTED.into_response(),
    }
}

/// Handles one decoded JSON-RPC value. Returns None for notifications,
/// which the transport acknowledges without a body.
pub fn dispatch(state: &AppState, ctx: &TenantContext, raw: Value) -> Option<Value> {
    let request = match raw {
        Value::Object(request) => request,
        _ => {
            return Some(rpc_error(
                Value::Null,
                JSONRPC_INVALID_REQUEST,
                "request must be a JSON object",
            ))
        }
    };
    let id = request.get("id").cloned();
    let reply_id = id.clone().unwrap_or(Value::Null);
    if request.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Some(rpc_error(
            reply_id,
            JSONRPC_INVALID_REQUEST,
            "jsonrpc must be the string \"2.0\"",
        ));
    }
    let method = match request.get("method").and_then(Value::as_str) {
        Some(method) => method,
        None => {
            return Some(rpc_error(
                reply_id,
                JSONRPC_INVALID_REQUEST,
                "method must be a string",
            ))
        }
    };
    if id.is_none() {
        // notification: acknowledged, never answered
        return None;
    }
    let params = request.get("params").cloned().unwrap_or(Value::Null);
    let reply = match method {
        "initialize" => rpc_result(reply_id, initialize_result(state)),
        "tools/list" => rpc_result(reply_id, json!({ "tools": tool_descriptors() })),
        "tools/call" => match tools_call(state, ctx, &params) {
            Ok(result) => rpc_result(reply_id, result),
            Err((code, message)) => rpc_error(reply_id, code, message),
        },
        other => rpc_error(reply_id, JSONRPC_METHOD_NOT_FOUND, format!("unknown method '{other}'")),
    };
    Some(reply)
}

fn rpc_result(id: Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

fn rpc_error(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message.into()}})
}

fn initialize_result(state: &AppState) -> Value {
    json!({
        "protocolVersion": PROTOCOL_VERSION,
        "capabilities": {
            "tools": {},
            "resources": {
                "resourceLinks": {
                    "dualResponse": true,
                    "baseUrl": state.base_url
                }
            }
        },
        "serverInfo": {
            "name": "reslink",
            "version": env!("CARGO_PKG_VERSION")
        }
    })
}

pub fn tool_descriptors() -> Vec<Value> {
    vec![
        json!({
            "name": "list_collections",
            "description": format!(
                "List queryable collections with your tenant's row counts. Optional fuzzy \
                 `search` matches by case-insensitive substring or small typo distance. {DECISION_RULE}"
            ),
            "inputSchema": {
                "type": "object",
                "properties": {
                    "search": {"type": "string", "description": "Optional name filter."}
                },
                "additionalProperties": false
            }
        }),
        json!({
            "name": "describe_collection",
            "description": format!(
                "Return the column schema for each named collection. Columns marked \
                 server_managed are injected automatically and never need to appear in your \
                 queries. {DECISION_RULE}"
            ),
            "inputSchema": {
                "type": "object",
                "properties": {
                    "names": {
                        "type": "array",
                        "items": {"type": "string"},
                        "minItems": 1,
                        "description": "Collections to describe; unknown names get per-name errors."
                    }
                },
                "required": ["names"],
                "additionalProperties": false
            }
        }),
        json!({
            "name": "run_query",
            "description": format!(
                "Run a read-only SQL query. Returns a capped preview in structuredContent.results \
                 plus a resource_link for the complete dataset, retrievable over REST with offset \
                 pagination. {DECISION_RULE}"
            ),
            "inputSchema": {
                "type": "object",
                "properties": {
                    "sql": {"type": "string", "description": "One SELECT statement; see query_help."}
                },
                "required": ["sql"],
                "additionalProperties": false
            }
        }),
        json!({
            "name": "query_help",
            "description": format!(
                "Return the query grammar, the available collections, and the preview cap. \
                 {DECISION_RULE}"
            ),
            "inputSchema": {"type": "object", "properties": {}, "additionalProperties": false}
        }),
        json!({
            "name": "derive_summary",
            "description": format!(
                "Group an existing resource's data and aggregate it into a new resource, \
                 returned as a fresh preview plus resource_link. Accepts a resource id from an \
                 earlier run_query or derive_summary call. {DECISION_RULE}"
            ),
            "inputSchema": {
                "type": "object",
                "properties": {
                    "resource_id": {"type": "string"},
                    "group_by": {"type": "string", "description": "Column of the source resource."},
                    "aggregate": {
                        "type": "object",
                        "properties": {
                            "fn": {"type": "string", "enum": ["COUNT", "SUM", "AVG", "MIN", "MAX"]},
                            "column": {"type": "string", "description": "Required except for COUNT."}
                        },
                        "required": ["fn"],
                        "additionalProperties": false
                    }
                },
                "required": ["resource_id", "group_by", "aggregate"],
                "additionalProperties": false
            }
        }),
    ]
}

fn tools_call(
    state: &AppState,
    ctx: &TenantContext,
    params: &Value,
) -> Result<Value, (i64, String)> {
    let name = params
        .get("name")
        .and_then(Value::as_str)
        .ok_or((JSONRPC_INVALID_PARAMS, "params.name must be a string".to_string()))?;
    let arguments = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
    let outcome = match name {
        "list_collections" => list_collections(state, ctx, &arguments),
        "describe_collection" => describe_collection(state, &arguments),
        "run_query" => run_query(state, ctx, &arguments),
        "query_help" => Ok(query_help(state)),
        "derive_summary" => derive_summary(state, ctx, &arguments),
        other => return Err((JSONRPC_INVALID_PARAMS, format!("unknown tool '{other}'"))),
    };
    Ok(outcome.unwrap_or_else(tool_error_result))
}

/// Wraps a structured payload as tool content: pretty text for display,
/// the raw object for programmatic use.
fn structured_result(payload: Value) -> Value {
    let text = serde_json::to_string_pretty(&payload).expect("tool payloads serialize");
    json!({
        "content": [{"type": "text", "text": text}],
        "structuredContent": payload
    })
}

fn dual_response_result(dual: &DualResponseToolResult) -> Value {
    let mut link = serde_json::to_value(&dual.resource).expect("resource link serializes");
    let item = link.as_object_mut().expect("resource link is an object");
    item.insert("type".into(), "resource_link".into());
    let mut entries = Map::new();
    entries.insert("type".into(), item.remove("type").unwrap());
    for key in ["uri", "name", "description", "mimeType", "size"] {
        if let Some(value) = item.remove(key) {
            entries.insert(key.into(), value);
        }
    }
    json!({
        "content": [Value::Object(entries)],
        "structuredContent": serde_json::to_value(dual).expect("dual response serializes")
    })
}

fn count_rows_for_tenant(
    state: &AppState,
    ctx: &TenantContext,
    table: &str,
) -> Result<u64, ToolError> {
    let ast = QueryAst {
        select: vec![SelectItem::Aggregate {
            func: AggregateFunc::Count,
            arg: AggregateArg::Star,
            alias: None,
        }],
        from: FromSource::Table(TableRef { name: table.to_string(), alias: None }),
        joins: vec![],
        where_clause: None,
        group_by: vec![],
        order_by: vec![],
        limit: None,
        offset: None,
    };
    let rewritten = guard::rewrite_for_tenant(&ast, ctx, &state.policy)?;
    let result = state.store.database().execute(&rewritten)?;
    match result.rows.first().and_then(|row| row.first()) {
        Some(crate::engine::Value::Integer(count)) if *count >= 0 => Ok(*count as u64),
        other => Err(ToolError::new("engine", format!("unexpected count result {other:?}"))),
    }
}

fn matches_search(name: &str, search: &str) -> bool {
    let name_lower = name.to_lowercase();
    let search_lower = search.to_lowercase();
    name_lower.contains(&search_lower) || strsim::levenshtein(&name_lower, &search_lower) <= 2
}

fn list_collections(
    state: &AppState,
    ctx: &TenantContext,
    args: &Value,
) -> Result<Value, ToolError> {
    let search = match args.get("search") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.as_str()),
        Some(_) => return Err(ToolError::new("validation", "search must be a string")),
    };
    let mut collections = Vec::new();
    for table in state.policy.tables() {
        if let Some(search) = search {
            if !matches_search(table, search) {
                continue;
            }
        }
        let row_count = count_rows_for_tenant(state, ctx, table)?;
        collections.push(json!({"name": table, "row_count": row_count}));
    }
    Ok(structured_result(json!({ "collections": collections })))
}

fn describe_collection(state: &AppState, args: &Value) -> Result<Value, ToolError> {
    let names = args
        .get("names")
        .and_then(Value::as_array)
        .ok_or_else(|| ToolError::new("validation", "names must be an array of strings"))?;
    if names.is_empty() {
        return Err(ToolError::new("validation", "names must not be empty"));
    }
    let mut collections = Map::new();
    for name in names {
        let name = name
            .as_str()
            .ok_or_else(|| ToolError::new("validation", "names must be an array of strings"))?;
        if !state.policy.is_whitelisted(name) {
            collections.insert(
                name.into(),
                json!({"error": format!("collection '{name}' is not available")}),
            );
            continue;
        }
        let table = state
            .store
            .database()
            .table(name)
            .ok_or_else(|| ToolError::new("engine", format!("collection '{name}' not loaded")))?;
        let tenant_column = state.policy.tenant_column(name);
        let columns: Vec<Value> = table
            .columns
            .iter()
            .map(|column| {
                let mut entry = Map::new();
                entry.insert("name".into(), column.name.clone().into());
                entry.insert("type".into(), column.column_type.as_str().into());
                if Some(column.name.as_str()) == tenant_column {
                    entry.insert("server_managed".into(), true.into());
                }
                Value::Object(entry)
            })
            .collect();
        collections.insert(name.into(), Value::Array(columns));
    }
    Ok(structured_result(json!({ "collections": collections })))
}

fn run_query(state: &AppState, ctx: &TenantContext, args: &Value) -> Result<Value, ToolError> {
    let sql = args
        .get("sql")
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::new("validation", "sql must be a string"))?;
    let ast = sql::parse(sql)?;
    let rewritten = guard::rewrite_for_tenant(&ast, ctx, &state.policy)?;
    let preview_ast = guard::cap_preview(&rewritten, state.policy.preview_cap());
    let preview = state.store.database().execute(&preview_ast)?;
    let (_, link, metadata) = state.store.create_resource(
        &rewritten,
        ctx,
        state.strategy,
        state.store.default_ttl_seconds(),
        Utc::now(),
    )?;
    let dual =
        DualResponseToolResult { results: preview.records(), resource: link, metadata };
    dual.validate().map_err(|e| ToolError::new("internal", e.to_string()))?;
    Ok(dual_response_result(&dual))
}

fn query_help(state: &AppState) -> Value {
    let tables: Vec<String> = state
        .policy
        .tables()
        .map(|name| {
            let columns = state
                .store
                .database()
                .table(name)
                .map(|table| {
                    table
                        .columns
                        .iter()
                        .map(|c| format!("{}:{}", c.name, c.column_type.as_str()))
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_default();
            format!("  {name} ({columns})")
        })
        .collect();
    let text = format!(
        "{grammar}\nCOLLECTIONS\n===========\n\n{tables}\n\nPREVIEWS\n========\n\nTool \
         previews are capped at {cap} rows. The complete dataset is always reachable through \
         the returned resource link, paged by offset and limit. {DECISION_RULE}\n",
        grammar = sql::GRAMMAR,
        tables = tables.join("\n"),
        cap = state.policy.preview_cap(),
    );
    json!({
        "content": [{"type": "text", "text": text}]
    })
}

fn derive_summary(
    state: &AppState,
    ctx: &TenantContext,
    args: &Value,
) -> Result<Value, ToolError> {
    let resource_id = args
        .get("resource_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::new("validation", "resource_id must be a string"))?;
    let group_by = args
        .get("group_by")
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::new("validation", "group_by must be a string"))?;
    let aggregate = args
        .get("aggregate")
        .and_then(Value::as_object)
        .ok_or_else(|| ToolError::new("validation", "aggregate must be an object"))?;
    let func_name = aggregate
        .get("fn")
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::new("validation", "aggregate.fn must be a string"))?;
    let func = AggregateFunc::parse(func_name).ok_or_else(|| {
        ToolError::new(
            "validation",
            format!("aggregate.fn must be one of COUNT, SUM, AVG, MIN, MAX, got '{func_name}'"),
        )
    })?;
    let column = match aggregate.get("column") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(ToolError::new("validation", "aggregate.column must be a string")),
    };
    let arg = match (&func, column) {
        (AggregateFunc::Count, None) => AggregateArg::Star,
        (_, Some(column)) => AggregateArg::Column(ColumnRef::bare(column)),
        (func, None) => {
            return Err(ToolError::new(
                "validation",
                format!("aggregate.column is required for {}", func.keyword()),
            ))
        }
    };

    let now = Utc::now();
    let (record, source) = state.store.resource_result(resource_id, ctx, now)?;
    if !source.columns.iter().any(|c| c.name == group_by) {
        let names: Vec<&str> = source.columns.iter().map(|c| c.name.as_str()).collect();
        return Err(ToolError::new(
            "validation",
            format!("group_by '{group_by}' is not a column of the resource; columns: {names:?}"),
        ));
    }
    if let AggregateArg::Column(column) = &arg {
        if !source.columns.iter().any(|c| c.name == column.column) {
            return Err(ToolError::new(
                "validation",
                format!("aggregate.column '{}' is not a column of the resource", column.column),
            ));
        }
    }

    // the grouped query runs in a scratch database over the source rows
    let scratch = Database::new();
    scratch
        .register(
            Table::new("source", source.columns.clone(), source.rows.clone())
                .map_err(|e| ToolError::new("engine", e.to_string()))?,
        )
        .map_err(|e| ToolError::new("engine", e.to_string()))?;
    let summary_ast = QueryAst {
        select: vec![
            SelectItem::Column { column: ColumnRef::bare(group_by), alias: None },
            SelectItem::Aggregate { func, arg, alias: None },
        ],
        from: FromSource::Table(TableRef { name: "source".to_string(), alias: None }),
        joins: vec![],
        where_clause: None,
        group_by: vec![ColumnRef::bare(group_by)],
        order_by: vec![],
        limit: None,
        offset: None,
    };
    let summary = scratch.execute(&summary_ast)?;

    let preview_rows: Vec<_> = summary
        .records()
        .into_iter()
        .take(state.policy.preview_cap() as usize)
        .collect();
    let description = format!(
        "{} by {group_by}, derived from resource {}",
        func.keyword(),
        record.id
    );
    let (_, link, metadata) = state.store.create_materialized(
        summary,
        description,
        ctx,
        state.store.default_ttl_seconds(),
        now,
    )?;
    let dual = DualResponseToolResult { results: preview_rows, resource: link, metadata };
    dual.validate().map_err(|e| ToolError::new("internal", e.to_string()))?;
    Ok(dual_response_result(&dual))
}
