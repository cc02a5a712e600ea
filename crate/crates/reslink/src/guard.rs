//! Tenant guard: every query that will touch data passes through here
//! first. Rewriting injects one tenant predicate per referenced table,
//! capping bounds the preview, and derive_count builds the companion
//! COUNT query with identical WHERE and JOIN logic.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{TenantContext, ValidationError};
use crate::sql::ast::{
    AggregateArg, AggregateFunc, ColumnRef, CompareOp, Expr, FromSource, Literal, Operand,
    QueryAst, SelectItem,
};

pub const DEFAULT_PREVIEW_CAP: u64 = 25;
pub const MAX_PREVIEW_CAP: u64 = 1000;

/// Whitelisted tables with their tenant columns, plus the preview cap.
/// Read-only after startup.
#[derive(Debug, Clone)]
pub struct TenantPolicy {
    table_whitelist: BTreeSet<String>,
    tenant_column: BTreeMap<String, String>,
    preview_cap: u64,
}

impl TenantPolicy {
    /// Every whitelisted table needs a tenant column, so the whitelist is
    /// exactly the key set of the map.
    pub fn new(
        tenant_columns: BTreeMap<String, String>,
        preview_cap: u64,
    ) -> Result<Self, ValidationError> {
        if preview_cap < 1 || preview_cap > MAX_PREVIEW_CAP {
            return Err(ValidationError::new(
                "preview_cap",
                format!("must be between 1 and {MAX_PREVIEW_CAP}, got {preview_cap}"),
            ));
        }
        for (table, column) in &tenant_columns {
            if table.is_empty() || column.is_empty() {
                return Err(ValidationError::new(
                    "tables",
                    "table and tenant column names must be non-empty",
                ));
            }
        }
        Ok(Self {
            table_whitelist: tenant_columns.keys().cloned().collect(),
            tenant_column: tenant_columns,
            preview_cap,
        })
    }

    pub fn preview_cap(&self) -> u64 {
        self.preview_cap
    }

    pub fn is_whitelisted(&self, table: &str) -> bool {
        self.table_whitelist.contains(table)
    }

    pub fn tenant_column(&self, table: &str) -> Option<&str> {
        self.tenant_column.get(table).map(String::as_str)
    }

    /// Whitelisted table names in sorted order.
    pub fn tables(&self) -> impl Iterator<Item = &str> {
        self.table_whitelist.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardError {
    #[error("access to table '{table}' is denied")]
    AccessDenied { table: String },
    #[error("invalid tenant id: {message}")]
    InvalidTenant { message: String },
}

/// Conjoins `label.tenant_column = '<tenant>'` for the FROM table and every
/// join. Predicates are appended as the right operand of a top-level AND,
/// FROM first then joins in clause order; a structurally identical conjunct
/// already present is not added again, which makes the rewrite idempotent.
pub fn rewrite_for_tenant(
    ast: &QueryAst,
    ctx: &TenantContext,
    policy: &TenantPolicy,
) -> Result<QueryAst, GuardError> {
    if ctx.tenant_id.contains('\'') {
        return Err(GuardError::InvalidTenant {
            message: "tenant id must not contain a single quote".into(),
        });
    }

    let mut out = ast.clone();
    if let FromSource::Subquery(inner) = &ast.from {
        out.from = FromSource::Subquery(Box::new(rewrite_for_tenant(inner, ctx, policy)?));
    }

    let mut sources: Vec<(&str, &str)> = Vec::new();
    if let FromSource::Table(table) = &ast.from {
        sources.push((table.name.as_str(), table.label()));
    }
    for join in &ast.joins {
        sources.push((join.table.name.as_str(), join.table.label()));
    }

    for (name, label) in sources {
        let column = match policy.tenant_column(name) {
            Some(column) if policy.is_whitelisted(name) => column,
            _ => return Err(GuardError::AccessDenied { table: name.to_string() }),
        };
        let predicate = Expr::Comparison {
            left: Operand::Column(ColumnRef::qualified(label, column)),
            op: CompareOp::Eq,
            right: Operand::Literal(Literal::Str(ctx.tenant_id.clone())),
        };
        let already_present = out
            .where_clause
            .as_ref()
            .is_some_and(|w| w.conjuncts().into_iter().any(|c| *c == predicate));
        if already_present {
            continue;
        }
        out.where_clause = Some(match out.where_clause.take() {
            None => predicate,
            Some(existing) => Expr::And(Box::new(existing), Box::new(predicate)),
        });
    }
    Ok(out)
}

/// Bounds the preview: resulting limit = min(existing limit, cap). All
/// other clauses pass through untouched, so ordering stays faithful.
pub fn cap_preview(ast: &QueryAst, cap: u64) -> QueryAst {
    debug_assert!(cap >= 1);
    let mut out = ast.clone();
    out.limit = Some(out.limit.map_or(cap, |limit| limit.min(cap)));
    out
}

/// The companion COUNT query: ORDER BY, LIMIT and OFFSET dropped, WHERE and
/// JOIN logic identical. Plain selects flatten to `SELECT COUNT(*) FROM ...`;
/// grouped or aggregate selects count rows of the query itself by wrapping
/// it in a synthesized subquery, so the result is always "rows the full
/// dataset has".
pub fn derive_count(ast: &QueryAst) -> QueryAst {
    let mut inner = ast.clone();
    inner.order_by.clear();
    inner.limit = None;
    inner.offset = None;

    let count_star = SelectItem::Aggregate {
        func: AggregateFunc::Count,
        arg: AggregateArg::Star,
        alias: None,
    };

    if inner.group_by.is_empty() && !inner.has_aggregates() {
        inner.select = vec![count_star];
        return inner;
    }
    QueryAst {
        select: vec![count_star],
        from: FromSource::Subquery(Box::new(inner)),
        joins: Vec::new(),
        where_clause: None,
        group_by: Vec::new(),
        order_by: Vec::new(),
        limit: None,
        offset: None,
    }
}

/// The query whose result a resource stores and pages over: the rewritten
/// query minus LIMIT and OFFSET. Those two clauses only window the preview;
/// the resource always holds every matching row so that pagination, the
/// COUNT companion and metadata.total_count agree.
pub fn dataset_query(ast: &QueryAst) -> QueryAst {
    let mut out = ast.clone();
    out.limit = None;
    out.offset = None;
    out
}
