//! Wire-visible data types of the dual-response pattern.
//!
//! Everything here serializes to the canonical JSON shapes shared by the
//! MCP tool responses and the REST gateway: snake_case keys, optional
//! fields omitted entirely when absent (never `null`).

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// A single result row: column name to JSON scalar, in column order.
pub type RowRecord = serde_json::Map<String, serde_json::Value>;

/// Closed set of column types understood by the query engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Float,
    Text,
    Timestamp,
    Boolean,
}

impl ColumnType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ColumnType::Integer => "integer",
            ColumnType::Float => "float",
            ColumnType::Text => "text",
            ColumnType::Timestamp => "timestamp",
            ColumnType::Boolean => "boolean",
        }
    }
}

/// Name and type of one output column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDefinition {
    pub name: String,
    #[serde(rename = "type")]
    pub column_type: ColumnType,
}

impl ColumnDefinition {
    pub fn new(name: impl Into<String>, column_type: ColumnType) -> Self {
        Self { name: name.into(), column_type }
    }
}

/// Sort direction for ORDER BY clauses and page sort overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    #[default]
    Asc,
    Desc,
}

/// URI handle referencing a stored query result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLink {
    pub uri: String,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "mimeType", skip_serializing_if = "Option::is_none")]
    pub mime_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
}

/// Query context shared by tool responses and REST metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMetadata {
    pub total_count: u64,
    pub executed_at: DateTime<Utc>,
    pub columns: Vec<ColumnDefinition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<DateTime<Utc>>,
}

impl QueryMetadata {
    /// Builds metadata, rejecting shapes that violate the type invariants.
    pub fn new(
        total_count: u64,
        executed_at: DateTime<Utc>,
        columns: Vec<ColumnDefinition>,
        expires_at: Option<DateTime<Utc>>,
    ) -> Result<Self, ValidationError> {
        let metadata = Self { total_count, executed_at, columns, expires_at };
        metadata.validate()?;
        Ok(metadata)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.columns.is_empty() {
            return Err(ValidationError::new("columns", "must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for column in &self.columns {
            if !seen.insert(column.name.as_str()) {
                return Err(ValidationError::new(
                    "columns",
                    format!("duplicate column name '{}'", column.name),
                ));
            }
        }
        if let Some(expires_at) = self.expires_at {
            if expires_at <= self.executed_at {
                return Err(ValidationError::new(
                    "expires_at",
                    "must be strictly later than executed_at",
                ));
            }
        }
        Ok(())
    }
}

/// The dual response: capped preview rows plus a link to the full dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualResponseToolResult {
    pub results: Vec<RowRecord>,
    pub resource: ResourceLink,
    pub metadata: QueryMetadata,
}

impl DualResponseToolResult {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.metadata.validate()?;
        if self.results.len() as u64 > self.metadata.total_count {
            return Err(ValidationError::new(
                "results",
                "preview row count exceeds metadata.total_count",
            ));
        }
        let columns: BTreeSet<&str> =
            self.metadata.columns.iter().map(|c| c.name.as_str()).collect();
        for row in &self.results {
            for key in row.keys() {
                if !columns.contains(key.as_str()) {
                    return Err(ValidationError::new(
                        "results",
                        format!("row key '{key}' is not declared in metadata.columns"),
                    ));
                }
            }
        }
        if self.resource.name.is_empty() {
            return Err(ValidationError::new("resource.name", "must not be empty"));
        }
        Ok(())
    }
}

/// Pagination cursor arithmetic for a data page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pagination {
    pub has_next: bool,
    pub has_previous: bool,
    pub next_offset: u64,
}

/// One page of the full dataset served over REST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPage {
    pub total_count: u64,
    pub returned_count: u64,
    pub offset: u64,
    pub data: Vec<RowRecord>,
    pub pagination: Pagination,
}

impl DataPage {
    /// Assembles a page; the pagination fields are derived, never supplied.
    pub fn new(total_count: u64, offset: u64, data: Vec<RowRecord>) -> Self {
        let returned_count = data.len() as u64;
        let next_offset = offset + returned_count;
        Self {
            total_count,
            returned_count,
            offset,
            data,
            pagination: Pagination {
                has_next: next_offset < total_count,
                has_previous: offset > 0,
                next_offset,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.returned_count != self.data.len() as u64 {
            return Err(ValidationError::new("returned_count", "must equal data length"));
        }
        let expected_next = self.offset + self.returned_count;
        if self.pagination.next_offset != expected_next
            || self.pagination.has_previous != (self.offset > 0)
            || self.pagination.has_next != (expected_next < self.total_count)
        {
            return Err(ValidationError::new("pagination", "derived fields are inconsistent"));
        }
        Ok(())
    }
}

/// Permission levels derivable from a bearer token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Read,
    Manage,
}

/// Tenant identity and scopes; drives every rewrite and authorization check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantContext {
    pub tenant_id: String,
    pub scopes: BTreeSet<Scope>,
}

impl TenantContext {
    pub fn new(
        tenant_id: impl Into<String>,
        scopes: impl IntoIterator<Item = Scope>,
    ) -> Result<Self, ValidationError> {
        let ctx = Self { tenant_id: tenant_id.into(), scopes: scopes.into_iter().collect() };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.tenant_id.is_empty() {
            return Err(ValidationError::new("tenant_id", "must not be empty"));
        }
        if self.scopes.is_empty() {
            return Err(ValidationError::new("scopes", "must not be empty"));
        }
        Ok(())
    }

    pub fn has_scope(&self, scope: Scope) -> bool {
        self.scopes.contains(&scope)
    }
}

/// A named invariant violation on a core type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

/// Character set for opaque resource ids: URL-safe, 8 to 64 chars.
pub fn is_valid_resource_id(id: &str) -> bool {
    (8..=64).contains(&id.len())
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Joins the resource base URL and a resource id with exactly one slash.
pub fn make_resource_uri(base_url: &str, resource_id: &str) -> Result<String, ValidationError> {
    let parsed = url::Url::parse(base_url)
        .map_err(|e| ValidationError::new("base_url", format!("not an absolute URL: {e}")))?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
        return Err(ValidationError::new("base_url", "must be an absolute http(s) URL"));
    }
    if !is_valid_resource_id(resource_id) {
        return Err(ValidationError::new(
            "resource_id",
            "must be 8-64 characters from [A-Za-z0-9_-]",
        ));
    }
    Ok(format!("{}/{}", base_url.trim_end_matches('/'), resource_id))
}
