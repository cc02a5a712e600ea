//! Shared plumbing for the integration suites: an independent oracle for
//! the seed dataset, a seeded query generator whose semantics are defined
//! by plain row scans (not by the engine under test), and a harness that
//! runs the real server on an ephemeral port.

#![allow(dead_code)]

use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use reslink::config::{ServerConfig, TableConfig, TokenEntry};
use reslink::model::Scope;
use reslink::server::RunningServer;
use serde_json::{json, Value};
use tempfile::TempDir;

pub const ALPHA: &str = "alpha-token";
pub const BETA: &str = "beta-token";
pub const READER: &str = "reader-token";

// ---------------------------------------------------------------------------
// Seed oracle. Recomputed from the dataset definition with its own
// arithmetic so a generator bug cannot hide behind itself.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub id: i64,
    pub tenant: &'static str,
    pub amount: i64,
    pub created_at: DateTime<Utc>,
}

pub fn oracle_rows() -> Vec<OracleRow> {
    let epoch = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    (1..=250i64)
        .map(|i| OracleRow {
            id: i,
            tenant: if i <= 150 { "t1" } else { "t2" },
            amount: (37 * i).rem_euclid(100),
            created_at: epoch + Duration::minutes(i),
        })
        .collect()
}

pub fn tenant_rows(tenant: &str) -> Vec<OracleRow> {
    oracle_rows().into_iter().filter(|r| r.tenant == tenant).collect()
}

/// JSON object shape the server emits for a seed row.
pub fn record_json(row: &OracleRow) -> Value {
    json!({
        "id": row.id,
        "tenant_id": row.tenant,
        "amount": row.amount,
        "created_at": row.created_at.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
    })
}

// ---------------------------------------------------------------------------
// Query generator. Each generated query carries its own row-scan semantics
// so expected previews, counts and pages come from this module alone.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Field {
    Id,
    Amount,
}

impl Field {
    fn name(self) -> &'static str {
        match self {
            Field::Id => "id",
            Field::Amount => "amount",
        }
    }

    fn of(self, row: &OracleRow) -> i64 {
        match self {
            Field::Id => row.id,
            Field::Amount => row.amount,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }

    fn holds(self, left: i64, right: i64) -> bool {
        match self {
            Op::Eq => left == right,
            Op::Ne => left != right,
            Op::Lt => left < right,
            Op::Le => left <= right,
            Op::Gt => left > right,
            Op::Ge => left >= right,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cond {
    Cmp(Field, Op, i64),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    fn matches(&self, row: &OracleRow) -> bool {
        match self {
            Cond::Cmp(field, op, k) => op.holds(field.of(row), *k),
            Cond::And(a, b) => a.matches(row) && b.matches(row),
            Cond::Or(a, b) => a.matches(row) || b.matches(row),
        }
    }

    fn sql(&self) -> String {
        match self {
            Cond::Cmp(field, op, k) => format!("{} {} {k}", field.name(), op.symbol()),
            Cond::And(a, b) => format!("{} AND {}", a.sql(), b.sql()),
            // parenthesized so AND cannot capture an OR arm
            Cond::Or(a, b) => format!("({} OR {})", a.sql(), b.sql()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedQuery {
    pub sql: String,
    pub cond: Option<Cond>,
    /// ORDER BY keys as (field, descending).
    pub order: Vec<(Field, bool)>,
    pub limit: Option<u64>,
}

impl GeneratedQuery {
    /// Dataset rows for a tenant: filter then stable sort, no LIMIT. This
    /// mirrors the contract that a resource stores the full result and the
    /// LIMIT only windows the preview.
    pub fn dataset(&self, tenant: &str) -> Vec<OracleRow> {
        let mut rows: Vec<OracleRow> = tenant_rows(tenant)
            .into_iter()
            .filter(|r| self.cond.as_ref().is_none_or(|c| c.matches(r)))
            .collect();
        // stable sort; ties keep id order, matching the engine's
        // physical-row tie-break over the id-ordered CSV
        for (field, desc) in self.order.iter().rev() {
            rows.sort_by(|a, b| {
                let ord = field.of(a).cmp(&field.of(b));
                if *desc {
                    ord.reverse()
                } else {
                    ord
                }
            });
        }
        rows
    }

    pub fn dataset_json(&self, tenant: &str) -> Vec<Value> {
        self.dataset(tenant).iter().map(record_json).collect()
    }
}

fn gen_cond(rng: &mut ChaCha8Rng, depth: u32) -> Cond {
    let leaf = |rng: &mut ChaCha8Rng| {
        let field = if rng.random_bool(0.5) { Field::Id } else { Field::Amount };
        let op = match rng.random_range(0..6) {
            0 => Op::Eq,
            1 => Op::Ne,
            2 => Op::Lt,
            3 => Op::Le,
            4 => Op::Gt,
            _ => Op::Ge,
        };
        let k = match field {
            Field::Id => rng.random_range(-5..260),
            Field::Amount => rng.random_range(-5..105),
        };
        Cond::Cmp(field, op, k)
    };
    if depth == 0 || rng.random_bool(0.5) {
        leaf(rng)
    } else {
        let a = Box::new(gen_cond(rng, depth - 1));
        let b = Box::new(gen_cond(rng, depth - 1));
        if rng.random_bool(0.5) {
            Cond::And(a, b)
        } else {
            Cond::Or(a, b)
        }
    }
}

/// Grammar-valid `SELECT * FROM orders` queries with optional WHERE,
/// ORDER BY and (when allowed) LIMIT. OFFSET is never generated: a
/// resource's dataset ignores the presentation window, so offsets only
/// shift previews and are pinned by dedicated tests instead.
pub fn gen_query(rng: &mut ChaCha8Rng, allow_limit: bool) -> GeneratedQuery {
    let cond = rng.random_bool(0.7).then(|| gen_cond(rng, 2));
    let mut order = Vec::new();
    if rng.random_bool(0.6) {
        order.push((
            if rng.random_bool(0.5) { Field::Id } else { Field::Amount },
            rng.random_bool(0.5),
        ));
        if rng.random_bool(0.3) {
            let second = if matches!(order[0].0, Field::Id) { Field::Amount } else { Field::Id };
            order.push((second, rng.random_bool(0.5)));
        }
    }
    let limit = (allow_limit && rng.random_bool(0.4)).then(|| rng.random_range(1..200u64));

    let mut sql = String::from("SELECT * FROM orders");
    if let Some(cond) = &cond {
        sql.push_str(&format!(" WHERE {}", cond.sql()));
    }
    if !order.is_empty() {
        let keys: Vec<String> = order
            .iter()
            .map(|(f, desc)| {
                format!("{}{}", f.name(), if *desc { " DESC" } else { " ASC" })
            })
            .collect();
        sql.push_str(&format!(" ORDER BY {}", keys.join(", ")));
    }
    if let Some(limit) = limit {
        sql.push_str(&format!(" LIMIT {limit}"));
    }
    GeneratedQuery { sql, cond, order, limit }
}

// ---------------------------------------------------------------------------
// Grouped queries with a brute-force enumeration oracle.

#[derive(Debug, Clone, Copy)]
pub enum GroupKey {
    Tenant,
    Amount,
}

#[derive(Debug, Clone, Copy)]
pub enum Agg {
    CountStar,
    SumAmount,
    AvgAmount,
    MinId,
    MaxAmount,
}

impl Agg {
    fn sql(self) -> &'static str {
        match self {
            Agg::CountStar => "COUNT(*) AS n",
            Agg::SumAmount => "SUM(amount) AS n",
            Agg::AvgAmount => "AVG(amount) AS n",
            Agg::MinId => "MIN(id) AS n",
            Agg::MaxAmount => "MAX(amount) AS n",
        }
    }

    fn over(self, rows: &[&OracleRow]) -> Value {
        match self {
            Agg::CountStar => json!(rows.len() as i64),
            Agg::SumAmount => json!(rows.iter().map(|r| r.amount).sum::<i64>()),
            Agg::AvgAmount => {
                let sum: f64 = rows.iter().fold(0.0, |acc, r| acc + r.amount as f64);
                json!(sum / rows.len() as f64)
            }
            Agg::MinId => json!(rows.iter().map(|r| r.id).min().unwrap()),
            Agg::MaxAmount => json!(rows.iter().map(|r| r.amount).max().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedGroupQuery {
    pub sql: String,
    pub cond: Option<Cond>,
    pub key: GroupKey,
    pub agg: Agg,
}

impl GeneratedGroupQuery {
    /// Expected grouped records in the engine's first-seen key order.
    pub fn groups(&self, tenant: &str) -> Vec<Value> {
        let rows = tenant_rows(tenant);
        let filtered: Vec<&OracleRow> = rows
            .iter()
            .filter(|r| self.cond.as_ref().is_none_or(|c| c.matches(r)))
            .collect();
        let mut keys: Vec<Value> = Vec::new();
        let mut buckets: Vec<Vec<&OracleRow>> = Vec::new();
        for row in filtered {
            let key = match self.key {
                GroupKey::Tenant => json!(row.tenant),
                GroupKey::Amount => json!(row.amount),
            };
            match keys.iter().position(|k| *k == key) {
                Some(i) => buckets[i].push(row),
                None => {
                    keys.push(key);
                    buckets.push(vec![row]);
                }
            }
        }
        let key_name = match self.key {
            GroupKey::Tenant => "tenant_id",
            GroupKey::Amount => "amount",
        };
        keys.into_iter()
            .zip(&buckets)
            .map(|(key, bucket)| json!({ key_name: key, "n": self.agg.over(bucket) }))
            .collect()
    }
}

pub fn gen_group_query(rng: &mut ChaCha8Rng) -> GeneratedGroupQuery {
    let key = if rng.random_bool(0.5) { GroupKey::Tenant } else { GroupKey::Amount };
    let agg = match rng.random_range(0..5) {
        0 => Agg::CountStar,
        1 => Agg::SumAmount,
        2 => Agg::AvgAmount,
        3 => Agg::MinId,
        _ => Agg::MaxAmount,
    };
    let cond = rng.random_bool(0.6).then(|| gen_cond(rng, 1));
    let key_name = match key {
        GroupKey::Tenant => "tenant_id",
        GroupKey::Amount => "amount",
    };
    let mut sql = format!("SELECT {key_name}, {} FROM orders", agg.sql());
    if let Some(cond) = &cond {
        sql.push_str(&format!(" WHERE {}", cond.sql()));
    }
    sql.push_str(&format!(" GROUP BY {key_name}"));
    GeneratedGroupQuery { sql, cond, key, agg }
}

// ---------------------------------------------------------------------------
// Server harness.

pub struct TestServer {
    pub server: RunningServer,
    pub client: reqwest::blocking::Client,
    _dir: TempDir,
}

pub fn base_config(dir: &Path) -> ServerConfig {
    let csv = dir.join("orders.csv");
    reslink::seed::write_orders_csv(&csv).expect("write seed csv");
    let token = |tenant: &str, scopes: &[Scope]| TokenEntry {
        tenant_id: tenant.to_string(),
        scopes: scopes.to_vec(),
    };
    ServerConfig {
        host: "127.0.0.1".into(),
        port: 0,
        base_url: None,
        mcp_path: "/mcp".into(),
        preview_cap: 25,
        default_ttl_seconds: 900,
        sweep_interval_seconds: 3600,
        sliding_expiry: false,
        strategy: reslink::store::PersistenceStrategy::StoreResults,
        capacity: 10_000,
        token_map: [
            (ALPHA.to_string(), token("t1", &[Scope::Read, Scope::Manage])),
            (BETA.to_string(), token("t2", &[Scope::Read, Scope::Manage])),
            (READER.to_string(), token("t1", &[Scope::Read])),
        ]
        .into(),
        tables: [(
            "orders".to_string(),
            TableConfig { csv, tenant_column: "tenant_id".into() },
        )]
        .into(),
    }
}

pub fn spawn(mutate: impl FnOnce(&mut ServerConfig)) -> TestServer {
    let dir = TempDir::new().expect("tempdir");
    let mut config = base_config(dir.path());
    mutate(&mut config);
    let server = RunningServer::spawn(config).expect("spawn server");
    let client = reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(30))
        .build()
        .expect("client");
    TestServer { server, client, _dir: dir }
}

impl TestServer {
    pub fn resource_url(&self, id: &str) -> String {
        format!("{}/{id}", self.server.base_url)
    }

    pub fn rpc(&self, token: &str, body: Value) -> Value {
        let response = self
            .client
            .post(&self.server.mcp_url)
            .bearer_auth(token)
            .json(&body)
            .send()
            .expect("mcp request");
        response.json().expect("mcp response body")
    }

    pub fn call_tool(&self, token: &str, name: &str, arguments: Value) -> Value {
        self.rpc(
            token,
            json!({
                "jsonrpc": "2.0",
                "id": 1,
                "method": "tools/call",
                "params": { "name": name, "arguments": arguments },
            }),
        )
    }

    /// Runs a query and returns the tool's structuredContent, panicking on
    /// tool-level errors so generator bugs surface with the query text.
    pub fn run_query(&self, token: &str, sql: &str) -> Value {
        let response = self.call_tool(token, "run_query", json!({ "sql": sql }));
        let result = &response["result"];
        assert!(
            result["isError"].is_null(),
            "query failed: {sql}\n{}",
            serde_json::to_string_pretty(result).unwrap()
        );
        result["structuredContent"].clone()
    }

    pub fn rest(
        &self,
        token: Option<&str>,
        method: reqwest::Method,
        url: &str,
        body: Option<Value>,
    ) -> (u16, Value) {
        let mut request = self.client.request(method, url);
        if let Some(token) = token {
            request = request.bearer_auth(token);
        }
        if let Some(body) = body {
            request = request.json(&body);
        }
        let response = request.send().expect("rest request");
        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        let body = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        (status, body)
    }

    pub fn get(&self, token: &str, id: &str) -> (u16, Value) {
        self.rest(Some(token), reqwest::Method::GET, &self.resource_url(id), None)
    }

    pub fn page(&self, token: &str, id: &str, body: Value) -> (u16, Value) {
        self.rest(Some(token), reqwest::Method::POST, &self.resource_url(id), Some(body))
    }

    pub fn pin(&self, token: &str, id: &str) -> (u16, Value) {
        self.rest(Some(token), reqwest::Method::PUT, &self.resource_url(id), None)
    }

    pub fn delete(&self, token: &str, id: &str) -> (u16, Value) {
        self.rest(Some(token), reqwest::Method::DELETE, &self.resource_url(id), None)
    }

    /// All rows of a resource via repeated page fetches at the given limit.
    pub fn fetch_all(&self, token: &str, id: &str, limit: u64) -> Vec<Value> {
        let mut rows = Vec::new();
        let mut offset = 0u64;
        loop {
            let (status, body) =
                self.page(token, id, json!({ "offset": offset, "limit": limit }));
            assert_eq!(status, 200, "page fetch failed: {body}");
            let data = body["data"].as_array().expect("page data").clone();
            let returned = data.len() as u64;
            rows.extend(data);
            if body["pagination"]["has_next"] != json!(true) || returned == 0 {
                break;
            }
            offset = body["pagination"]["next_offset"].as_u64().expect("next_offset");
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// Acceptance reporting: one visible pass/fail line per criterion.

pub fn criterion(name: &str, check: impl FnOnce() -> Result<String, String>) {
    match check() {
        Ok(detail) => println!("acceptance {name}: PASS - {detail}"),
        Err(detail) => {
            println!("acceptance {name}: FAIL - {detail}");
            panic!("acceptance criterion {name} failed: {detail}");
        }
    }
}
