//! The acceptance gate. One test per criterion, each printing a single
//! `acceptance cN: PASS/FAIL` line. Tolerances are pinned here: counts,
//! row contents and orderings compare exactly; AVG aggregates compare
//! within 1e-9; the c1 wall-clock budget is 10 seconds.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::Utc;
use common::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reslink::engine::{Database, Table, Value as EngineValue};
use reslink::guard::{derive_count, rewrite_for_tenant, TenantPolicy};
use reslink::model::{ColumnDefinition, ColumnType, Scope, SortOrder, TenantContext};
use reslink::sql::ast::{
    AggregateArg, AggregateFunc, ColumnRef, CompareOp, Expr, FromSource, Join, Literal,
    Operand, OrderKey, QueryAst, SelectItem, TableRef,
};
use reslink::sql::{parse, render};
use reslink::store::{PersistenceStrategy, ResourceStore, StoreError};
use serde_json::{json, Value};

/// The seed table rebuilt from the oracle rows, bypassing the CSV path.
fn oracle_database() -> Arc<Database> {
    let columns = vec![
        ColumnDefinition::new("id", ColumnType::Integer),
        ColumnDefinition::new("tenant_id", ColumnType::Text),
        ColumnDefinition::new("amount", ColumnType::Integer),
        ColumnDefinition::new("created_at", ColumnType::Timestamp),
    ];
    let rows = oracle_rows()
        .into_iter()
        .map(|r| {
            vec![
                EngineValue::Integer(r.id),
                EngineValue::Text(r.tenant.to_string()),
                EngineValue::Integer(r.amount),
                EngineValue::Timestamp(r.created_at),
            ]
        })
        .collect();
    let db = Database::new();
    db.register(Table::new("orders", columns, rows).unwrap()).unwrap();
    Arc::new(db)
}

fn orders_policy() -> TenantPolicy {
    TenantPolicy::new(
        BTreeMap::from([("orders".to_string(), "tenant_id".to_string())]),
        25,
    )
    .unwrap()
}

fn t1() -> TenantContext {
    TenantContext::new("t1", [Scope::Read, Scope::Manage]).unwrap()
}

#[test]
fn c1_preview_capping() {
    criterion("c1 preview-capping", || {
        let server = spawn(|_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
        let started = Instant::now();
        for _ in 0..200 {
            let q = gen_query(&mut rng, true);
            let sc = server.run_query(ALPHA, &q.sql);
            let preview = sc["results"].as_array().expect("results array");
            if preview.len() > 25 {
                return Err(format!(
                    "preview of {} rows exceeds cap 25 for: {}",
                    preview.len(),
                    q.sql
                ));
            }
            let expected = q.dataset("t1").len() as u64;
            let total = sc["metadata"]["total_count"].as_u64().unwrap();
            if total != expected {
                return Err(format!(
                    "total_count {total} != oracle {expected} for: {}",
                    q.sql
                ));
            }
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(10) {
            return Err(format!("200 queries took {elapsed:?}, budget is 10s"));
        }
        Ok(format!(
            "200 randomized queries: previews <= 25 rows, totals match the row-scan oracle, {elapsed:?}"
        ))
    });
}

#[test]
fn c2_tenant_isolation_fuzz() {
    criterion("c2 tenant-isolation", || {
        let server = spawn(|_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
        let queries: Vec<_> = (0..500).map(|_| gen_query(&mut rng, true)).collect();
        for (token, tenant) in [(ALPHA, "t1"), (BETA, "t2")] {
            for q in &queries {
                let sc = server.run_query(token, &q.sql);
                for row in sc["results"].as_array().unwrap() {
                    if row["tenant_id"] != json!(tenant) {
                        return Err(format!(
                            "preview leaked {} row to {tenant} for: {}",
                            row["tenant_id"], q.sql
                        ));
                    }
                }
                let expected = q.dataset(tenant).len() as u64;
                let total = sc["metadata"]["total_count"].as_u64().unwrap();
                if total != expected {
                    return Err(format!(
                        "derived count {total} != {tenant} oracle {expected} for: {}",
                        q.sql
                    ));
                }
                let id = sc["resource"]["name"].as_str().unwrap();
                let rows = server.fetch_all(token, id, 1000);
                if rows.len() as u64 != total {
                    return Err(format!(
                        "pages returned {} rows, total_count says {total} for: {}",
                        rows.len(),
                        q.sql
                    ));
                }
                for row in &rows {
                    if row["tenant_id"] != json!(tenant) {
                        return Err(format!(
                            "page leaked {} row to {tenant} for: {}",
                            row["tenant_id"], q.sql
                        ));
                    }
                }
            }
        }
        Ok("500 queries per tenant: zero foreign rows in previews, counts and pages".into())
    });
}

#[test]
fn c3_preview_full_consistency() {
    criterion("c3 preview-consistency", || {
        let server = spawn(|_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
        for _ in 0..200 {
            let q = gen_query(&mut rng, true);
            let sc = server.run_query(ALPHA, &q.sql);
            let preview = sc["results"].as_array().unwrap();
            let id = sc["resource"]["name"].as_str().unwrap();
            let (status, body) = server.page(ALPHA, id, json!({ "offset": 0, "limit": 1000 }));
            if status != 200 {
                return Err(format!("page-0 fetch returned {status} for: {}", q.sql));
            }
            let page = body["data"].as_array().unwrap();
            if preview[..] != page[..preview.len().min(page.len())] {
                return Err(format!("preview is not a prefix of page 0 for: {}", q.sql));
            }
        }
        Ok("200 queries: preview rows = first k rows of page 0, exact equality".into())
    });
}

#[test]
fn c4_pagination_completeness() {
    criterion("c4 pagination-completeness", || {
        let server = spawn(|_| {});
        let sc = server.run_query(ALPHA, "SELECT * FROM orders ORDER BY id");
        let id = sc["resource"]["name"].as_str().unwrap();
        let expected: Vec<Value> = tenant_rows("t1").iter().map(record_json).collect();
        if expected.len() != 150 {
            return Err(format!("oracle produced {} t1 rows, want 150", expected.len()));
        }
        for limit in [1u64, 7, 100, 1000] {
            let rows = server.fetch_all(ALPHA, id, limit);
            if rows != expected {
                return Err(format!(
                    "limit {limit}: concatenated pages ({} rows) differ from the unlimited oracle",
                    rows.len()
                ));
            }
            let ids: Vec<i64> = rows.iter().map(|r| r["id"].as_i64().unwrap()).collect();
            if ids != (1..=150).collect::<Vec<_>>() {
                return Err(format!("limit {limit}: duplicate or missing ids"));
            }
        }
        Ok("limits 1, 7, 100, 1000 all rebuild the 150-row dataset exactly".into())
    });
}

#[test]
fn c5_lifecycle() {
    criterion("c5 lifecycle", || {
        let server = spawn(|c| c.default_ttl_seconds = 1);
        let store = &server.server.state().store;

        let sc = server.run_query(ALPHA, "SELECT * FROM orders");
        let id = sc["resource"]["name"].as_str().unwrap();
        let (status, _) = server.get(ALPHA, id);
        if status != 200 {
            return Err(format!("fresh resource returned {status}"));
        }
        std::thread::sleep(Duration::from_millis(1300));
        let (status, _) = server.get(ALPHA, id);
        if status != 410 {
            return Err(format!("expired resource returned {status}, want 410"));
        }
        store.sweep(Utc::now());
        let (status, _) = server.get(ALPHA, id);
        if status != 404 {
            return Err(format!("swept resource returned {status}, want 404"));
        }

        let sc = server.run_query(ALPHA, "SELECT * FROM orders");
        let pinned = sc["resource"]["name"].as_str().unwrap();
        let (status, body) = server.pin(ALPHA, pinned);
        if status != 200 {
            return Err(format!("pin returned {status}"));
        }
        if body.get("expires_at").is_some() {
            return Err("pinned metadata still carries expires_at".into());
        }
        let far_future = Utc::now() + chrono::Duration::days(365);
        for _ in 0..100 {
            store.sweep(far_future);
        }
        let (status, _) = server.get(ALPHA, pinned);
        if status != 200 {
            return Err(format!("pinned resource gone after sweeps: {status}"));
        }

        let sc = server.run_query(ALPHA, "SELECT * FROM orders");
        let doomed = sc["resource"]["name"].as_str().unwrap();
        let (status, _) = server.delete(ALPHA, doomed);
        if status != 204 {
            return Err(format!("delete returned {status}"));
        }
        let (status, _) = server.get(ALPHA, doomed);
        if status != 404 {
            return Err(format!("deleted resource returned {status}, want 404"));
        }
        Ok("ttl=1s: 410 after expiry, 404 after sweep; pin survives 100 sweeps; delete immediate"
            .into())
    });
}

/// Compares grouped records allowing 1e-9 slack on floats (AVG).
fn rows_close(actual: &[Value], expected: &[Value]) -> bool {
    if actual.len() != expected.len() {
        return false;
    }
    actual.iter().zip(expected).all(|(a, e)| {
        let (Some(a), Some(e)) = (a.as_object(), e.as_object()) else { return a == e };
        a.len() == e.len()
            && e.iter().all(|(key, want)| match (a.get(key), want.as_f64()) {
                (Some(got), Some(want_n)) if got.is_f64() || want.is_f64() => {
                    got.as_f64().is_some_and(|g| (g - want_n).abs() <= 1e-9)
                }
                (Some(got), _) => got == want,
                (None, _) => false,
            })
    })
}

#[test]
fn c6_count_derivation_equivalence() {
    criterion("c6 count-derivation", || {
        let db = oracle_database();
        let policy = orders_policy();
        let ctx = t1();
        let mut rng = ChaCha8Rng::seed_from_u64(0xC6);

        let count_of = |ast: &QueryAst| -> u64 {
            let result = db.execute(&derive_count(ast)).expect("count query");
            match result.rows[0][0] {
                EngineValue::Integer(n) => n as u64,
                ref other => panic!("count produced {other:?}"),
            }
        };

        for _ in 0..200 {
            let q = gen_query(&mut rng, false);
            let rewritten = rewrite_for_tenant(&parse(&q.sql).unwrap(), &ctx, &policy).unwrap();
            let executed = db.execute(&rewritten).unwrap().len() as u64;
            let counted = count_of(&rewritten);
            if counted != executed {
                return Err(format!(
                    "derive_count {counted} != execute length {executed} for: {}",
                    q.sql
                ));
            }
            if executed != q.dataset("t1").len() as u64 {
                return Err(format!("engine disagrees with row-scan oracle for: {}", q.sql));
            }
        }

        for _ in 0..60 {
            let q = gen_group_query(&mut rng);
            let rewritten = rewrite_for_tenant(&parse(&q.sql).unwrap(), &ctx, &policy).unwrap();
            let result = db.execute(&rewritten).unwrap();
            let counted = count_of(&rewritten);
            if counted != result.len() as u64 {
                return Err(format!(
                    "grouped derive_count {counted} != {} groups for: {}",
                    result.len(),
                    q.sql
                ));
            }
            let actual: Vec<Value> =
                result.records().into_iter().map(Value::Object).collect();
            let expected = q.groups("t1");
            if !rows_close(&actual, &expected) {
                return Err(format!(
                    "groups differ from enumeration oracle for: {}\nactual: {actual:?}\nexpected: {expected:?}",
                    q.sql
                ));
            }
        }
        Ok("200 plain + 60 grouped queries: derive_count = execute length, groups match brute force"
            .into())
    });
}

#[test]
fn c7_discovery_contract() {
    criterion("c7 discovery", || {
        let server = spawn(|_| {});
        let root = format!("http://{}", server.server.addr);

        // the published shape, spelled out independently of the handler code
        let expected_doc = json!({
            "methods": {
                "metadata": { "method": "GET", "path": "/{id}" },
                "data": { "method": "POST", "path": "/{id}",
                          "accepts": ["offset", "limit", "sort"] },
                "save": { "method": "PUT", "path": "/{id}" },
                "delete": { "method": "DELETE", "path": "/{id}" },
            }
        });
        let (status, doc) = server.rest(
            None,
            reqwest::Method::GET,
            &format!("{root}/.well-known/resource-link-service"),
            None,
        );
        if status != 200 || doc != expected_doc {
            return Err(format!("well-known document mismatch (status {status}): {doc}"));
        }

        let init = server.rpc(
            ALPHA,
            json!({ "jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {} }),
        );
        let links = &init["result"]["capabilities"]["resources"]["resourceLinks"];
        if links["dualResponse"] != json!(true) {
            return Err(format!("initialize lacks dualResponse: {init}"));
        }
        let base = links["baseUrl"].as_str().unwrap_or_default().to_string();
        if base.is_empty() {
            return Err("initialize lacks baseUrl".into());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
        let mut id = String::new();
        for _ in 0..10 {
            let q = gen_query(&mut rng, true);
            let sc = server.run_query(ALPHA, &q.sql);
            let uri = sc["resource"]["uri"].as_str().unwrap();
            if !uri.starts_with(&base) {
                return Err(format!("link uri {uri} not under baseUrl {base}"));
            }
            id = sc["resource"]["name"].as_str().unwrap().to_string();
        }

        // every advertised route answers at its published path
        let methods = doc["methods"].as_object().unwrap();
        for (name, want) in
            [("metadata", 200u16), ("data", 200), ("save", 200), ("delete", 204)]
        {
            let spec = &methods[name];
            let url = format!("{base}{}", spec["path"].as_str().unwrap().replace("{id}", &id));
            let method: reqwest::Method =
                spec["method"].as_str().unwrap().parse().unwrap();
            let body = (name == "data").then(|| json!({}));
            let (status, response) = server.rest(Some(ALPHA), method, &url, body);
            if status != want {
                return Err(format!(
                    "advertised {name} route returned {status}, want {want}: {response}"
                ));
            }
        }
        Ok("well-known matches the published shape; routes respond; baseUrl prefixes every uri"
            .into())
    });
}

// --- c8 helpers: a generator for parser-canonical ASTs -----------------

const IDENTS: &[&str] = &["orders", "items", "events", "log_a", "x1", "snapshot"];
const ALIASES: &[&str] = &["o", "i2", "src", "alpha"];
const COLUMNS: &[&str] = &["id", "amount", "region", "status", "created_at", "total"];

fn gen_ident(rng: &mut ChaCha8Rng) -> String {
    IDENTS[rng.random_range(0..IDENTS.len())].to_string()
}

fn gen_column_ref(rng: &mut ChaCha8Rng, labels: &[String]) -> ColumnRef {
    let column = COLUMNS[rng.random_range(0..COLUMNS.len())];
    if !labels.is_empty() && rng.random_bool(0.3) {
        ColumnRef::qualified(labels[rng.random_range(0..labels.len())].clone(), column)
    } else {
        ColumnRef::bare(column)
    }
}

fn gen_literal(rng: &mut ChaCha8Rng) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Integer(rng.random_range(-1000..1000)),
        1 => Literal::Float(rng.random_range(-10_000..10_000) as f64 / 100.0),
        2 => Literal::Str("it's".into()),
        _ => Literal::Str(format!("v{}", rng.random_range(0..100))),
    }
}

fn gen_comparison(rng: &mut ChaCha8Rng, labels: &[String]) -> Expr {
    let op = match rng.random_range(0..6) {
        0 => CompareOp::Eq,
        1 => CompareOp::Ne,
        2 => CompareOp::Lt,
        3 => CompareOp::Le,
        4 => CompareOp::Gt,
        _ => CompareOp::Ge,
    };
    let left = if rng.random_bool(0.8) {
        Operand::Column(gen_column_ref(rng, labels))
    } else {
        Operand::Literal(gen_literal(rng))
    };
    let right = if rng.random_bool(0.5) {
        Operand::Column(gen_column_ref(rng, labels))
    } else {
        Operand::Literal(gen_literal(rng))
    };
    Expr::Comparison { left, op, right }
}

// The expression generators only build trees the parser itself can
// produce: AND and OR chains nest leftward, and an OR below an AND is a
// real two-arm node so the renderer's parentheses recreate it.

/// A parenthesized OR with at least two arms, legal anywhere under AND.
fn gen_paren_or(rng: &mut ChaCha8Rng, labels: &[String], depth: u32) -> Expr {
    let mut expr = gen_and_chain(rng, labels, depth, false);
    for _ in 0..rng.random_range(1..=2usize) {
        expr = Expr::Or(
            Box::new(expr),
            Box::new(gen_and_chain(rng, labels, depth, false)),
        );
    }
    expr
}

/// A left-folded AND chain. `allow_or` permits a lone OR subexpression
/// when this chain degenerates to a single operand; a chain of two or
/// more can hold OR operands anywhere since AND forces the parens.
fn gen_and_chain(rng: &mut ChaCha8Rng, labels: &[String], depth: u32, allow_or: bool) -> Expr {
    let n = rng.random_range(1..=3usize);
    let operand = |rng: &mut ChaCha8Rng, or_ok: bool| {
        if or_ok && depth > 0 && rng.random_bool(0.25) {
            gen_paren_or(rng, labels, depth - 1)
        } else {
            gen_comparison(rng, labels)
        }
    };
    if n == 1 {
        return operand(rng, allow_or);
    }
    let mut expr = operand(rng, true);
    for _ in 1..n {
        expr = Expr::And(Box::new(expr), Box::new(operand(rng, true)));
    }
    expr
}

fn gen_expr(rng: &mut ChaCha8Rng, labels: &[String], depth: u32) -> Expr {
    let arms = rng.random_range(1..=3usize);
    let mut expr = gen_and_chain(rng, labels, depth, true);
    for _ in 1..arms {
        expr = Expr::Or(
            Box::new(expr),
            Box::new(gen_and_chain(rng, labels, depth, false)),
        );
    }
    expr
}

/// Builds an AST in the parser's canonical form: unique source labels,
/// unique output names, and GROUP BY covering every plain select column.
fn gen_ast(rng: &mut ChaCha8Rng) -> QueryAst {
    let from_alias = rng
        .random_bool(0.4)
        .then(|| ALIASES[rng.random_range(0..ALIASES.len())].to_string());
    let from = TableRef { name: gen_ident(rng), alias: from_alias };
    let mut labels = vec![from.label().to_string()];

    let mut joins = Vec::new();
    for suffix in ["j1", "j2"] {
        if rng.random_bool(0.25) {
            // suffixed alias keeps source labels unique
            let table = TableRef { name: gen_ident(rng), alias: Some(suffix.to_string()) };
            labels.push(suffix.to_string());
            joins.push(Join {
                table,
                on_left: gen_column_ref(rng, &labels),
                on_right: gen_column_ref(rng, &labels),
            });
        }
    }

    let group_by: Vec<ColumnRef> = if rng.random_bool(0.25) {
        let mut keys = vec![gen_column_ref(rng, &labels)];
        if rng.random_bool(0.3) {
            let second = gen_column_ref(rng, &labels);
            if second != keys[0] {
                keys.push(second);
            }
        }
        keys
    } else {
        Vec::new()
    };

    let select = if !group_by.is_empty() {
        let mut items: Vec<SelectItem> = group_by
            .iter()
            .enumerate()
            .map(|(i, column)| SelectItem::Column {
                column: column.clone(),
                // aliases keep output names unique when keys share a column name
                alias: Some(format!("k{i}")),
            })
            .collect();
        items.push(SelectItem::Aggregate {
            func: AggregateFunc::Count,
            arg: AggregateArg::Star,
            alias: None,
        });
        if rng.random_bool(0.5) {
            items.push(SelectItem::Aggregate {
                func: AggregateFunc::Sum,
                arg: AggregateArg::Column(gen_column_ref(rng, &labels)),
                alias: Some("s".into()),
            });
        }
        items
    } else if rng.random_bool(0.15) {
        // scalar aggregates only
        vec![
            SelectItem::Aggregate {
                func: match rng.random_range(0..5) {
                    0 => AggregateFunc::Count,
                    1 => AggregateFunc::Sum,
                    2 => AggregateFunc::Avg,
                    3 => AggregateFunc::Min,
                    _ => AggregateFunc::Max,
                },
                arg: if rng.random_bool(0.3) {
                    AggregateArg::Star
                } else {
                    AggregateArg::Column(gen_column_ref(rng, &labels))
                },
                alias: rng.random_bool(0.5).then(|| "agg".to_string()),
            },
        ]
    } else if rng.random_bool(0.3) {
        vec![SelectItem::Star]
    } else {
        let n = rng.random_range(1..=3usize);
        (0..n)
            .map(|i| SelectItem::Column {
                column: gen_column_ref(rng, &labels),
                alias: Some(format!("c{i}")),
            })
            .collect()
    };

    // COUNT(col) on Star arg is illegal, keep aggregates for COUNT only
    let select = select
        .into_iter()
        .map(|item| match item {
            SelectItem::Aggregate { func, arg: AggregateArg::Star, alias }
                if func != AggregateFunc::Count =>
            {
                SelectItem::Aggregate {
                    func,
                    arg: AggregateArg::Column(ColumnRef::bare("id")),
                    alias,
                }
            }
            other => other,
        })
        .collect();

    let order_by = if rng.random_bool(0.4) {
        (0..rng.random_range(1..=2usize))
            .map(|_| OrderKey {
                column: gen_column_ref(rng, &labels),
                order: if rng.random_bool(0.5) { SortOrder::Asc } else { SortOrder::Desc },
            })
            .collect()
    } else {
        Vec::new()
    };

    QueryAst {
        select,
        from: FromSource::Table(from),
        joins,
        where_clause: rng.random_bool(0.6).then(|| gen_expr(rng, &labels, 2)),
        group_by,
        order_by,
        limit: rng.random_bool(0.4).then(|| rng.random_range(0..10_000u64)),
        offset: rng.random_bool(0.3).then(|| rng.random_range(0..10_000u64)),
    }
}

#[test]
fn c8_parser_robustness() {
    criterion("c8 parser-robustness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC8);

        for i in 0..100_000u32 {
            let input: String = if i % 2 == 0 {
                let len = rng.random_range(0..64usize);
                let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            } else {
                // mutate a valid query: flip, truncate or inject bytes
                let mut text = gen_query(&mut rng, true).sql.into_bytes();
                for _ in 0..rng.random_range(1..6usize) {
                    match rng.random_range(0..3) {
                        0 if !text.is_empty() => {
                            let at = rng.random_range(0..text.len());
                            text[at] = rng.random();
                        }
                        1 if !text.is_empty() => {
                            text.truncate(rng.random_range(0..text.len()));
                        }
                        _ => {
                            let at = rng.random_range(0..=text.len());
                            text.insert(at, rng.random());
                        }
                    }
                }
                String::from_utf8_lossy(&text).into_owned()
            };
            let outcome =
                std::panic::catch_unwind(|| parse(&input).map(|_| ()));
            match outcome {
                Err(_) => return Err(format!("parser panicked on input {input:?}")),
                Ok(Err(e)) => {
                    if e.message.is_empty() || e.position > input.len() {
                        return Err(format!(
                            "unstructured error {{pos {}, msg {:?}}} on input {input:?}",
                            e.position, e.message
                        ));
                    }
                }
                Ok(Ok(())) => {}
            }
        }

        for i in 0..10_000u32 {
            let ast = gen_ast(&mut rng);
            let text = render(&ast);
            match parse(&text) {
                Ok(reparsed) if reparsed == ast => {}
                Ok(reparsed) => {
                    return Err(format!(
                        "round-trip drift at {i}: {text}\n  built: {ast:?}\n  reparsed: {reparsed:?}"
                    ));
                }
                Err(e) => {
                    return Err(format!(
                        "rendered AST fails to parse at {i}: {text} ({} at byte {})",
                        e.message, e.position
                    ));
                }
            }
        }
        Ok("100000 fuzzed inputs crash-free with structured errors; 10000 ASTs round-trip".into())
    });
}

#[test]
fn c9_concurrency_soak() {
    criterion("c9 concurrency-soak", || {
        let db = oracle_database();
        let store = Arc::new(ResourceStore::new(
            Arc::clone(&db),
            "http://127.0.0.1:0/resources",
            500,
            2,
            false,
        ));
        let policy = orders_policy();

        // a pool of rewritten queries for workers to draw from
        let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
        let contexts: Vec<TenantContext> = vec![
            t1(),
            TenantContext::new("t2", [Scope::Read, Scope::Manage]).unwrap(),
        ];
        let pool: Arc<Vec<QueryAst>> = Arc::new(
            (0..20)
                .map(|i| {
                    let q = gen_query(&mut rng, false);
                    let ctx = &contexts[i % 2];
                    rewrite_for_tenant(&parse(&q.sql).unwrap(), ctx, &policy).unwrap()
                })
                .collect(),
        );

        let ledger: Arc<Mutex<Vec<(String, usize)>>> = Arc::new(Mutex::new(Vec::new()));
        let violations = Arc::new(AtomicUsize::new(0));
        let deadline = Instant::now() + Duration::from_secs(10);

        let workers: Vec<_> = (0..8)
            .map(|w| {
                let store = Arc::clone(&store);
                let pool = Arc::clone(&pool);
                let ledger = Arc::clone(&ledger);
                let violations = Arc::clone(&violations);
                let ctx = contexts[w % 2].clone();
                let tenant_index = w % 2;
                std::thread::spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(0x900 + w as u64);
                    let fail = |what: String| {
                        violations.fetch_add(1, Ordering::Relaxed);
                        eprintln!("worker {w}: {what}");
                    };
                    while Instant::now() < deadline {
                        let now = Utc::now();
                        let known = {
                            let ledger = ledger.lock().unwrap();
                            if ledger.is_empty() {
                                None
                            } else {
                                Some(ledger[rng.random_range(0..ledger.len())].clone())
                            }
                        };
                        match rng.random_range(0..100) {
                            0..30 => {
                                let ast = &pool[tenant_index + 2 * rng.random_range(0..10usize)];
                                let strategy = if rng.random_bool(0.5) {
                                    PersistenceStrategy::StoreResults
                                } else {
                                    PersistenceStrategy::StoreQuery
                                };
                                let ttl = rng.random_range(1..=3u64);
                                match store.create_resource(ast, &ctx, strategy, ttl, now) {
                                    Ok((record, _, _)) => {
                                        ledger
                                            .lock()
                                            .unwrap()
                                            .push((record.id.clone(), tenant_index));
                                    }
                                    Err(StoreError::Capacity) => {}
                                    Err(e) => fail(format!("create: {e}")),
                                }
                            }
                            30..55 => {
                                if let Some((id, _)) = known {
                                    let sort = match rng.random_range(0..3) {
                                        0 => None,
                                        1 => Some(("amount".to_string(), SortOrder::Desc)),
                                        _ => Some(("no_such".to_string(), SortOrder::Asc)),
                                    };
                                    let offset = rng.random_range(0..200u64);
                                    let limit = rng.random_range(1..=1000u64);
                                    match store.fetch_page(&id, &ctx, offset, limit, sort, now) {
                                        Ok(_)
                                        | Err(StoreError::NotFound)
                                        | Err(StoreError::Gone)
                                        | Err(StoreError::Validation { .. }) => {}
                                        Err(e) => fail(format!("fetch: {e}")),
                                    }
                                }
                            }
                            55..70 => {
                                if let Some((id, _)) = known {
                                    match store.get_metadata(&id, &ctx, now) {
                                        Ok(_)
                                        | Err(StoreError::NotFound)
                                        | Err(StoreError::Gone) => {}
                                        Err(e) => fail(format!("metadata: {e}")),
                                    }
                                }
                            }
                            70..80 => {
                                if let Some((id, _)) = known {
                                    match store.pin(&id, &ctx, now) {
                                        Ok(_)
                                        | Err(StoreError::NotFound)
                                        | Err(StoreError::Gone) => {}
                                        Err(e) => fail(format!("pin: {e}")),
                                    }
                                }
                            }
                            80..90 => {
                                if let Some((id, _)) = known {
                                    match store.delete(&id, &ctx) {
                                        Ok(()) | Err(StoreError::NotFound) => {}
                                        Err(e) => fail(format!("delete: {e}")),
                                    }
                                }
                            }
                            _ => {
                                store.sweep(now);
                            }
                        }
                    }
                })
            })
            .collect();
        for worker in workers {
            worker.join().map_err(|_| "worker panicked".to_string())?;
        }
        if violations.load(Ordering::Relaxed) > 0 {
            return Err(format!(
                "{} unexpected errors during the soak",
                violations.load(Ordering::Relaxed)
            ));
        }

        // final consistency at one fixed instant: after a sweep nothing is
        // expired-but-present, and every live id the workers created is
        // readable by its owner
        let frozen = Utc::now() + chrono::Duration::seconds(5);
        store.sweep(frozen);
        let ledger = ledger.lock().unwrap();
        let mut live = 0usize;
        for (id, tenant_index) in ledger.iter() {
            match store.get_metadata(id, &contexts[*tenant_index], frozen) {
                Ok(metadata) => {
                    live += 1;
                    if metadata.expires_at.is_some_and(|at| at <= frozen) {
                        return Err(format!("resource {id} survived sweep while expired"));
                    }
                }
                Err(StoreError::NotFound) => {}
                Err(e) => return Err(format!("post-sweep read of {id}: {e}")),
            }
        }
        if live != store.len() {
            return Err(format!(
                "store holds {} records but only {live} are reachable",
                store.len()
            ));
        }
        Ok(format!(
            "8 workers x 10s: clean responses only; {} created, {live} live and consistent",
            ledger.len()
        ))
    });
}
