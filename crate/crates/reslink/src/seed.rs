//! Deterministic demo dataset. Tests derive their oracles from the same
//! closed-form generator, so keep it boring: row i of 250 belongs to t1
//! for i <= 150 and t2 above, amount cycles through (37*i) mod 100, and
//! created_at advances one minute per row.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use crate::model::{ColumnDefinition, ColumnType};

pub const ORDERS_TABLE: &str = "orders";
pub const ORDERS_TENANT_COLUMN: &str = "tenant_id";
pub const ROWS: u32 = 250;
pub const T1_ROWS: u32 = 150;

pub fn orders_schema() -> Vec<ColumnDefinition> {
    [
        ("id", ColumnType::Integer),
        ("tenant_id", ColumnType::Text),
        ("amount", ColumnType::Integer),
        ("created_at", ColumnType::Timestamp),
    ]
    .into_iter()
    .map(|(name, column_type)| ColumnDefinition { name: name.to_string(), column_type })
    .collect()
}

pub fn epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
}

pub fn tenant_for_row(i: u32) -> &'static str {
    if i <= T1_ROWS {
        "t1"
    } else {
        "t2"
    }
}

pub fn amount_for_row(i: u32) -> i64 {
    (37 * i64::from(i)) % 100
}

pub fn created_at_for_row(i: u32) -> DateTime<Utc> {
    epoch() + Duration::minutes(i64::from(i))
}

pub fn orders_csv() -> String {
    let mut out = String::from("id,tenant_id,amount,created_at\n");
    for i in 1..=ROWS {
        out.push_str(&format!(
            "{i},{},{},{}\n",
            tenant_for_row(i),
            amount_for_row(i),
            created_at_for_row(i).format("%Y-%m-%dT%H:%M:%SZ"),
        ));
    }
    out
}

pub fn write_orders_csv(path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(orders_csv().as_bytes())
}
