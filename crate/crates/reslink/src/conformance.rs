//! Black-box conformance suite. Everything is discovered over the wire:
//! the resource base comes from initialize, the route shapes from the
//! well-known document, collections and tenant columns from the discovery
//! tools. Only connectivity failures abort the run; every other problem is
//! a failed check in the report.

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::{json, Value};

use crate::rest::well_known_document;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(check: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { check: check.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConformanceError {
    #[error("cannot reach server: {0}")]
    Connect(String),
}

fn connect(e: reqwest::Error) -> ConformanceError {
    ConformanceError::Connect(e.to_string())
}

/// The expiry check only works when the target's TTL fits in a test run.
const MAX_OBSERVABLE_TTL_SECONDS: i64 = 30;
const SWEEP_WAIT_SECONDS: u64 = 10;

/// Facts accumulated by earlier checks for later ones.
#[derive(Default)]
struct Discovered {
    resources_base: Option<String>,
    collection: Option<String>,
    tenant_column: Option<String>,
}

/// A run_query dual response reduced to what the checks compare.
struct Dual {
    resource_id: String,
    resource_uri: String,
    total_count: u64,
    preview: Vec<Value>,
}

pub fn run_conformance(
    base_url: &str,
    mcp_path: &str,
    tokens: &[String],
) -> Result<Vec<CheckReport>, ConformanceError> {
    let target = Target::new(base_url, mcp_path, tokens.to_vec())?;
    let mut found = Discovered::default();
    let reports = vec![
        target.check_well_known()?,
        target.check_initialize(&mut found)?,
        target.check_preview_cap(&mut found)?,
        target.check_count_consistency(&found)?,
        target.check_pagination(&found)?,
        target.check_lifecycle(&found)?,
        target.check_isolation(&found)?,
    ];
    Ok(reports)
}

struct Target {
    client: reqwest::blocking::Client,
    root: String,
    mcp_url: String,
    tokens: Vec<String>,
}

impl Target {
    fn new(
        base_url: &str,
        mcp_path: &str,
        tokens: Vec<String>,
    ) -> Result<Self, ConformanceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(connect)?;
        let root = base_url.trim_end_matches('/').to_string();
        Ok(Self { mcp_url: format!("{root}{mcp_path}"), client, root, tokens })
    }

    fn token(&self) -> &str {
        &self.tokens[0]
    }

    fn rpc(&self, token: &str, method: &str, params: Value) -> Result<Value, ConformanceError> {
        let request =
            json!({"jsonrpc": "2.0", "id": 1, "method": method, "params": params});
        let response = self
            .client
            .post(&self.mcp_url)
            .bearer_auth(token)
            .json(&request)
            .send()
            .map_err(connect)?;
        Ok(response.json().unwrap_or(Value::Null))
    }

    fn rest(
        &self,
        token: Option<&str>,
        method: reqwest::Method,
        url: &str,
        body: Option<Value>,
    ) -> Result<(u16, Value), ConformanceError> {
        let mut request = self.client.request(method, url);
        if let Some(token) = token {
            request = request.bearer_auth(token);
        }
        if let Some(body) = body {
            request = request.json(&body);
        }
        let response = request.send().map_err(connect)?;
        let status = response.status().as_u16();
        Ok((status, response.json().unwrap_or(Value::Null)))
    }

    /// Runs run_query and reduces the dual response; Err(String) is a
    /// logical failure to be reported, not a transport problem.
    fn run_query(
        &self,
        token: &str,
        sql: &str,
    ) -> Result<Result<Dual, String>, ConformanceError> {
        let response = self.rpc(
            token,
            "tools/call",
            json!({"name": "run_query", "arguments": {"sql": sql}}),
        )?;
        if let Some(error) = response.get("error") {
            return Ok(Err(format!("protocol error for '{sql}': {error}")));
        }
        if response.pointer("/result/isError").and_then(Value::as_bool) == Some(true) {
            let text = response
                .pointer("/result/content/0/text")
                .and_then(Value::as_str)
                .unwrap_or("unknown tool error");
            return Ok(Err(format!("tool error for '{sql}': {text}")));
        }
        let content = response.pointer("/result/structuredContent");
        let total_count = content
            .and_then(|c| c.pointer("/metadata/total_count"))
            .and_then(Value::as_u64);
        let preview = content
            .and_then(|c| c.get("results"))
            .and_then(Value::as_array)
            .cloned();
        let resource_id = content
            .and_then(|c| c.pointer("/resource/name"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let resource_uri = content
            .and_then(|c| c.pointer("/resource/uri"))
            .and_then(Value::as_str)
            .map(str::to_string);
        match (total_count, preview, resource_id, resource_uri) {
            (Some(total_count), Some(preview), Some(resource_id), Some(resource_uri)) => {
                Ok(Ok(Dual { resource_id, resource_uri, total_count, preview }))
            }
            _ => Ok(Err(format!(
                "dual response for '{sql}' is missing total_count, results, or resource"
            ))),
        }
    }

    fn resource_url(&self, base: &str, id: &str) -> String {
        format!("{}/{id}", base.trim_end_matches('/'))
    }

    /// All pages of a resource at the given limit, or a logical failure.
    fn fetch_all(
        &self,
        token: &str,
        base: &str,
        id: &str,
        limit: u64,
    ) -> Result<Result<Vec<Value>, String>, ConformanceError> {
        let url = self.resource_url(base, id);
        let mut rows = Vec::new();
        let mut offset = 0u64;
        for _ in 0..100_000 {
            let (status, body) = self.rest(
                Some(token),
                reqwest::Method::POST,
                &url,
                Some(json!({"offset": offset, "limit": limit})),
            )?;
            if status != 200 {
                return Ok(Err(format!("page fetch at offset {offset} returned {status}")));
            }
            let Some(data) = body.get("data").and_then(Value::as_array) else {
                return Ok(Err(format!("page at offset {offset} has no data array")));
            };
            rows.extend(data.iter().cloned());
            let has_next =
                body.pointer("/pagination/has_next").and_then(Value::as_bool).unwrap_or(false);
            if !has_next {
                return Ok(Ok(rows));
            }
            let next = body
                .pointer("/pagination/next_offset")
                .and_then(Value::as_u64)
                .unwrap_or(offset);
            if next <= offset {
                return Ok(Err(format!("pagination did not advance past offset {offset}")));
            }
            offset = next;
        }
        Ok(Err("pagination never terminated".to_string()))
    }

    fn check_well_known(&self) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "well_known_shape";
        let url = format!("{}/.well-known/resource-link-service", self.root);
        let (status, body) = self.rest(None, reqwest::Method::GET, &url, None)?;
        if status != 200 {
            return Ok(CheckReport::new(NAME, false, format!("GET returned {status}")));
        }
        let expected = well_known_document();
        if body == expected {
            return Ok(CheckReport::new(
                NAME,
                true,
                "document matches: methods metadata/data/save/delete, data accepts offset/limit/sort",
            ));
        }
        let mut problems = Vec::new();
        let methods = body.get("methods").and_then(Value::as_object);
        match methods {
            None => problems.push("no methods object".to_string()),
            Some(methods) => {
                for name in ["metadata", "data", "save", "delete"] {
                    if !methods.contains_key(name) {
                        problems.push(format!("missing method '{name}'"));
                    }
                }
                for name in methods.keys() {
                    if !["metadata", "data", "save", "delete"].contains(&name.as_str()) {
                        problems.push(format!("unexpected method '{name}'"));
                    }
                }
                if let Some(entry) = methods.get("data") {
                    if entry.get("accepts") != expected.pointer("/methods/data/accepts") {
                        problems.push(format!(
                            "data.accepts is {}, expected [\"offset\",\"limit\",\"sort\"]",
                            entry.get("accepts").unwrap_or(&Value::Null)
                        ));
                    }
                }
                for name in ["metadata", "data", "save", "delete"] {
                    let (method, path) = (
                        expected.pointer(&format!("/methods/{name}/method")),
                        expected.pointer(&format!("/methods/{name}/path")),
                    );
                    if let Some(entry) = methods.get(name) {
                        if entry.get("method") != method.cloned().as_ref()
                            || entry.get("path") != path.cloned().as_ref()
                        {
                            problems.push(format!("method '{name}' differs"));
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            problems.push("document differs from the published shape".to_string());
        }
        Ok(CheckReport::new(NAME, false, problems.join("; ")))
    }

    fn check_initialize(
        &self,
        found: &mut Discovered,
    ) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "initialize_capabilities";
        let response = self.rpc(self.token(), "initialize", json!({}))?;
        let mut problems = Vec::new();
        let version = response.pointer("/result/protocolVersion").and_then(Value::as_str);
        if version != Some("2025-06-18") {
            problems.push(format!("protocolVersion is {version:?}, expected \"2025-06-18\""));
        }
        if response.pointer("/result/capabilities/tools").is_none() {
            problems.push("capabilities.tools is absent".to_string());
        }
        let links = response.pointer("/result/capabilities/resources/resourceLinks");
        match links {
            None => problems.push("capabilities.resources.resourceLinks is absent".to_string()),
            Some(links) => {
                if links.get("dualResponse").and_then(Value::as_bool) != Some(true) {
                    problems.push("resourceLinks.dualResponse is not true".to_string());
                }
                match links.get("baseUrl").and_then(Value::as_str) {
                    Some(base) if !base.is_empty() => {
                        found.resources_base = Some(base.trim_end_matches('/').to_string());
                    }
                    _ => problems.push("resourceLinks.baseUrl is missing or empty".to_string()),
                }
            }
        }
        if problems.is_empty() {
            Ok(CheckReport::new(
                NAME,
                true,
                format!("dualResponse advertised, baseUrl {}", found.resources_base.as_deref().unwrap_or("?")),
            ))
        } else {
            Ok(CheckReport::new(NAME, false, problems.join("; ")))
        }
    }

    fn check_preview_cap(
        &self,
        found: &mut Discovered,
    ) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "preview_cap";
        let response = self.rpc(
            self.token(),
            "tools/call",
            json!({"name": "list_collections", "arguments": {}}),
        )?;
        let collection = response
            .pointer("/result/structuredContent/collections/0/name")
            .and_then(Value::as_str)
            .map(str::to_string);
        let Some(collection) = collection else {
            return Ok(CheckReport::new(NAME, false, "list_collections returned no collections"));
        };
        found.collection = Some(collection.clone());

        // tenant column discovery feeds the isolation check
        let described = self.rpc(
            self.token(),
            "tools/call",
            json!({"name": "describe_collection", "arguments": {"names": [collection]}}),
        )?;
        if let Some(columns) = described
            .pointer(&format!("/result/structuredContent/collections/{collection}"))
            .and_then(Value::as_array)
        {
            found.tenant_column = columns
                .iter()
                .find(|c| c.get("server_managed").and_then(Value::as_bool) == Some(true))
                .and_then(|c| c.get("name"))
                .and_then(Value::as_str)
                .map(str::to_string);
        }

        let dual =
            match self.run_query(self.token(), &format!("SELECT * FROM {collection} LIMIT 10000"))? {
                Ok(dual) => dual,
                Err(message) => return Ok(CheckReport::new(NAME, false, message)),
            };
        let preview = dual.preview.len() as u64;
        let mut problems = Vec::new();
        if preview > 1000 {
            problems.push(format!("preview has {preview} rows, above the 1000 ceiling"));
        }
        if preview > dual.total_count {
            problems.push(format!(
                "preview has {preview} rows but total_count is {}",
                dual.total_count
            ));
        }
        if dual.total_count > preview && dual.resource_uri.is_empty() {
            problems.push("truncated response carries no resource uri".to_string());
        }
        if problems.is_empty() {
            Ok(CheckReport::new(
                NAME,
                true,
                format!("preview capped at {preview} of {} total rows", dual.total_count),
            ))
        } else {
            Ok(CheckReport::new(NAME, false, problems.join("; ")))
        }
    }

    fn query_all(
        &self,
        found: &Discovered,
        sql: &str,
    ) -> Result<Result<(Dual, Vec<Value>), String>, ConformanceError> {
        let Some(base) = &found.resources_base else {
            return Ok(Err("skipped: no resource base discovered".to_string()));
        };
        let dual = match self.run_query(self.token(), sql)? {
            Ok(dual) => dual,
            Err(message) => return Ok(Err(message)),
        };
        let rows = match self.fetch_all(self.token(), base, &dual.resource_id, 1000)? {
            Ok(rows) => rows,
            Err(message) => return Ok(Err(message)),
        };
        Ok(Ok((dual, rows)))
    }

    fn check_count_consistency(
        &self,
        found: &Discovered,
    ) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "count_consistency";
        let Some(collection) = &found.collection else {
            return Ok(CheckReport::new(NAME, false, "skipped: no collection discovered"));
        };
        let (dual, rows) = match self.query_all(found, &format!("SELECT * FROM {collection}"))? {
            Ok(result) => result,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        if rows.len() as u64 != dual.total_count {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!(
                    "total_count {} but page reconstruction yields {} rows",
                    dual.total_count,
                    rows.len()
                ),
            ));
        }
        if !dual.preview.iter().eq(rows.iter().take(dual.preview.len())) {
            return Ok(CheckReport::new(
                NAME,
                false,
                "preview rows are not a prefix of the paged dataset",
            ));
        }
        Ok(CheckReport::new(
            NAME,
            true,
            format!("total_count {} equals page reconstruction; preview is a prefix", dual.total_count),
        ))
    }

    fn check_pagination(&self, found: &Discovered) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "pagination_completeness";
        let Some(collection) = &found.collection else {
            return Ok(CheckReport::new(NAME, false, "skipped: no collection discovered"));
        };
        let Some(base) = &found.resources_base else {
            return Ok(CheckReport::new(NAME, false, "skipped: no resource base discovered"));
        };
        let (dual, full) = match self.query_all(found, &format!("SELECT * FROM {collection}"))? {
            Ok(result) => result,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        for limit in [7u64, 100] {
            let rebuilt = match self.fetch_all(self.token(), base, &dual.resource_id, limit)? {
                Ok(rows) => rows,
                Err(message) => return Ok(CheckReport::new(NAME, false, message)),
            };
            if rebuilt != full {
                return Ok(CheckReport::new(
                    NAME,
                    false,
                    format!(
                        "limit {limit} reconstruction yields {} rows, limit 1000 yields {}",
                        rebuilt.len(),
                        full.len()
                    ),
                ));
            }
        }
        Ok(CheckReport::new(
            NAME,
            true,
            format!("limits 7 and 100 both rebuild the {}-row dataset exactly", full.len()),
        ))
    }

    fn check_lifecycle(&self, found: &Discovered) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "lifecycle";
        let Some(collection) = &found.collection else {
            return Ok(CheckReport::new(NAME, false, "skipped: no collection discovered"));
        };
        let Some(base) = &found.resources_base else {
            return Ok(CheckReport::new(NAME, false, "skipped: no resource base discovered"));
        };
        let sql = format!("SELECT * FROM {collection} LIMIT 1");
        let token = self.token();

        // TTL must be observable within a test run
        let probe = match self.run_query(token, &sql)? {
            Ok(dual) => dual,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        let url = self.resource_url(base, &probe.resource_id);
        let (status, metadata) = self.rest(Some(token), reqwest::Method::GET, &url, None)?;
        if status != 200 {
            return Ok(CheckReport::new(NAME, false, format!("fresh GET returned {status}")));
        }
        let parse_ts = |value: Option<&Value>| {
            value
                .and_then(Value::as_str)
                .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
                .map(|t| t.with_timezone(&Utc))
        };
        let executed_at = parse_ts(metadata.get("executed_at"));
        let expires_at = parse_ts(metadata.get("expires_at"));
        let (Some(executed_at), Some(expires_at)) = (executed_at, expires_at) else {
            return Ok(CheckReport::new(
                NAME,
                false,
                "metadata lacks parseable executed_at/expires_at",
            ));
        };
        let ttl = (expires_at - executed_at).num_seconds();
        if ttl > MAX_OBSERVABLE_TTL_SECONDS {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!(
                    "server ttl is {ttl}s; expiry is only observable with ttl <= \
                     {MAX_OBSERVABLE_TTL_SECONDS}s (run against a short-ttl config)"
                ),
            ));
        }

        // delete is immediate
        let doomed = match self.run_query(token, &sql)? {
            Ok(dual) => dual,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        let doomed_url = self.resource_url(base, &doomed.resource_id);
        let (status, _) = self.rest(Some(token), reqwest::Method::DELETE, &doomed_url, None)?;
        if status != 204 {
            return Ok(CheckReport::new(NAME, false, format!("DELETE returned {status}")));
        }
        let (status, _) = self.rest(Some(token), reqwest::Method::GET, &doomed_url, None)?;
        if status != 404 {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("GET after DELETE returned {status}, expected 404"),
            ));
        }

        // pin survives expiry; unpinned twin expires and is swept
        let pinned = match self.run_query(token, &sql)? {
            Ok(dual) => dual,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        let pinned_url = self.resource_url(base, &pinned.resource_id);
        let (status, saved) = self.rest(Some(token), reqwest::Method::PUT, &pinned_url, None)?;
        if status != 200 {
            return Ok(CheckReport::new(NAME, false, format!("PUT returned {status}")));
        }
        if saved.get("expires_at").is_some() {
            return Ok(CheckReport::new(NAME, false, "pinned metadata still has expires_at"));
        }
        std::thread::sleep(std::time::Duration::from_secs(ttl as u64 + 1));
        let (status, _) = self.rest(Some(token), reqwest::Method::GET, &url, None)?;
        if status != 410 && status != 404 {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("expired resource returned {status}, expected 410 or 404"),
            ));
        }
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(SWEEP_WAIT_SECONDS);
        let swept = loop {
            let (status, _) = self.rest(Some(token), reqwest::Method::GET, &url, None)?;
            if status == 404 {
                break true;
            }
            if std::time::Instant::now() >= deadline {
                break false;
            }
            std::thread::sleep(std::time::Duration::from_millis(250));
        };
        if !swept {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("expired resource not swept to 404 within {SWEEP_WAIT_SECONDS}s"),
            ));
        }
        let (status, _) = self.rest(Some(token), reqwest::Method::GET, &pinned_url, None)?;
        if status != 200 {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("pinned resource returned {status} after the expiry window"),
            ));
        }
        Ok(CheckReport::new(
            NAME,
            true,
            format!("ttl {ttl}s: expiry hits 410/404, sweep yields 404, pin survives, delete immediate"),
        ))
    }

    fn check_isolation(&self, found: &Discovered) -> Result<CheckReport, ConformanceError> {
        const NAME: &str = "isolation";
        if self.tokens.len() < 2 {
            return Ok(CheckReport::new(
                NAME,
                false,
                "needs two --token values for different tenants",
            ));
        }
        let Some(collection) = &found.collection else {
            return Ok(CheckReport::new(NAME, false, "skipped: no collection discovered"));
        };
        let Some(base) = &found.resources_base else {
            return Ok(CheckReport::new(NAME, false, "skipped: no resource base discovered"));
        };
        let (first, second) = (&self.tokens[0], &self.tokens[1]);

        // cross-tenant resource probing: foreign ids must read as unknown
        let mine = match self.run_query(first, &format!("SELECT * FROM {collection}"))? {
            Ok(dual) => dual,
            Err(message) => return Ok(CheckReport::new(NAME, false, message)),
        };
        let url = self.resource_url(base, &mine.resource_id);
        let (status, _) = self.rest(Some(second), reqwest::Method::GET, &url, None)?;
        if status != 404 {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("foreign GET returned {status}, expected 404"),
            ));
        }
        let (status, _) = self.rest(
            Some(second),
            reqwest::Method::POST,
            &url,
            Some(json!({"offset": 0, "limit": 10})),
        )?;
        if status != 404 {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!("foreign POST returned {status}, expected 404"),
            ));
        }

        let Some(tenant_column) = &found.tenant_column else {
            return Ok(CheckReport::new(
                NAME,
                true,
                "foreign resource ids read as 404; no server_managed column advertised, \
                 value-level check skipped",
            ));
        };

        // each tenant must see at most one tenant value, and never a shared one
        let mut seen: Vec<std::collections::BTreeSet<String>> = Vec::new();
        for token in [first, second] {
            let grouped = match self.run_query(
                token,
                &format!("SELECT {tenant_column}, COUNT(*) FROM {collection} GROUP BY {tenant_column}"),
            )? {
                Ok(dual) => dual,
                Err(message) => return Ok(CheckReport::new(NAME, false, message)),
            };
            let rows = match self.fetch_all(token, base, &grouped.resource_id, 1000)? {
                Ok(rows) => rows,
                Err(message) => return Ok(CheckReport::new(NAME, false, message)),
            };
            let values: std::collections::BTreeSet<String> = rows
                .iter()
                .filter_map(|row| row.get(tenant_column))
                .map(|value| match value.as_str() {
                    Some(s) => s.to_string(),
                    None => value.to_string(),
                })
                .collect();
            if values.len() > 1 {
                return Ok(CheckReport::new(
                    NAME,
                    false,
                    format!("one token sees {} distinct {tenant_column} values", values.len()),
                ));
            }
            seen.push(values);
        }
        if !seen[0].is_disjoint(&seen[1]) {
            return Ok(CheckReport::new(
                NAME,
                false,
                format!(
                    "both tokens see {tenant_column} {:?}; pass tokens of two different tenants",
                    seen[0]
                ),
            ));
        }
        Ok(CheckReport::new(
            NAME,
            true,
            format!(
                "foreign ids read as 404; {tenant_column} values disjoint across tokens ({:?} vs {:?})",
                seen[0], seen[1]
            ),
        ))
    }
}
