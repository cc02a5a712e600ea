//! In-memory reference backend: typed tables loaded from CSV, naive
//! relational execution of rewritten ASTs. Tables are immutable once
//! registered (tests may swap a whole table via `replace`), so request
//! handlers share them through `Arc` snapshots and never block each other.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::RwLock;

use crate::model::{ColumnDefinition, ColumnType, RowRecord, SortOrder};
use crate::sql::ast::{
    AggregateArg, AggregateFunc, ColumnRef, CompareOp, Expr, FromSource, Literal, Operand,
    OrderKey, QueryAst, SelectItem,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Integer(i64),
    Float(f64),
    Text(String),
    Timestamp(DateTime<Utc>),
    Boolean(bool),
    Null,
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Integer(_) => "integer",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
            Value::Timestamp(_) => "timestamp",
            Value::Boolean(_) => "boolean",
            Value::Null => "null",
        }
    }

    pub fn matches_type(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Integer(_), ColumnType::Integer)
                | (Value::Float(_), ColumnType::Float)
                | (Value::Text(_), ColumnType::Text)
                | (Value::Timestamp(_), ColumnType::Timestamp)
                | (Value::Boolean(_), ColumnType::Boolean)
                | (Value::Null, _)
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Integer(v) => serde_json::Value::from(*v),
            Value::Float(v) => serde_json::Value::from(*v),
            Value::Text(v) => serde_json::Value::from(v.clone()),
            Value::Timestamp(v) => {
                serde_json::Value::from(v.to_rfc3339_opts(SecondsFormat::AutoSi, true))
            }
            Value::Boolean(v) => serde_json::Value::from(*v),
            Value::Null => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnDefinition>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<ColumnDefinition>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Self, LoadError> {
        let name = name.into();
        if columns.is_empty() {
            return Err(LoadError::Header { message: "a table needs at least one column".into() });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(LoadError::Ingestion {
                    row: i + 1,
                    message: format!(
                        "expected {} values, got {}",
                        columns.len(),
                        row.len()
                    ),
                });
            }
            for (value, column) in row.iter().zip(&columns) {
                if !value.matches_type(column.column_type) {
                    return Err(LoadError::Ingestion {
                        row: i + 1,
                        message: format!(
                            "column '{}' expects {}, got {}",
                            column.name,
                            column.column_type.as_str(),
                            value.type_name()
                        ),
                    });
                }
            }
        }
        Ok(Self { name, columns, rows })
    }
}

/// Rows in their final deterministic order: the query's ORDER BY, then the
/// physical row index ascending as the last tie-break.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub columns: Vec<ColumnDefinition>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows as JSON objects keyed by column name, in column order.
    pub fn records(&self) -> Vec<RowRecord> {
        self.rows
            .iter()
            .map(|row| {
                let mut record = RowRecord::new();
                for (value, column) in row.iter().zip(&self.columns) {
                    record.insert(column.name.clone(), value.to_json());
                }
                record
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown table '{table}'")]
    UnknownTable { table: String },
    #[error("unknown column '{column}'")]
    UnknownColumn { column: String },
    #[error("ambiguous column '{column}'; qualify it with a table or alias")]
    AmbiguousColumn { column: String },
    #[error("{message}")]
    TypeMismatch { message: String },
    #[error("{message}")]
    InvalidQuery { message: String },
    #[error("{message}")]
    Overflow { message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read csv: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("table '{table}' is already registered")]
    Conflict { table: String },
    #[error("header mismatch: {message}")]
    Header { message: String },
    #[error("row {row}: {message}")]
    Ingestion { row: usize, message: String },
}

/// The table store. Registration happens at startup; `replace` exists so
/// lifecycle tests can mutate data under a live store-query resource.
#[derive(Debug, Default)]
pub struct Database {
    tables: RwLock<BTreeMap<String, Arc<Table>>>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, table: Table) -> Result<Arc<Table>, LoadError> {
        let mut tables = self.tables.write();
        if tables.contains_key(&table.name) {
            return Err(LoadError::Conflict { table: table.name });
        }
        let arc = Arc::new(table);
        tables.insert(arc.name.clone(), Arc::clone(&arc));
        Ok(arc)
    }

    pub fn replace(&self, table: Table) {
        self.tables.write().insert(table.name.clone(), Arc::new(table));
    }

    pub fn table(&self, name: &str) -> Option<Arc<Table>> {
        self.tables.read().get(name).cloned()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    /// Loads a CSV file whose header must match `schema` names in order.
    pub fn load_csv(
        &self,
        path: &Path,
        table_name: &str,
        schema: Vec<ColumnDefinition>,
    ) -> Result<Arc<Table>, LoadError> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> =
            reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let expected: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
        if header != expected {
            return Err(LoadError::Header {
                message: format!("expected columns {expected:?}, file has {header:?}"),
            });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(schema.len());
            for (field, column) in record.iter().zip(&schema) {
                let value = coerce_field(field, column.column_type).map_err(|message| {
                    LoadError::Ingestion { row: i + 1, message }
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        self.register(Table::new(table_name, schema, rows)?)
    }

    /// Loads a CSV file, inferring each column's type from its values.
    pub fn load_csv_inferred(
        &self,
        path: &Path,
        table_name: &str,
    ) -> Result<Arc<Table>, LoadError> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> =
            reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.is_empty() {
            return Err(LoadError::Header { message: "empty header row".into() });
        }
        let mut raw: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            raw.push(record?.iter().map(str::to_string).collect());
        }
        let schema: Vec<ColumnDefinition> = header
            .iter()
            .enumerate()
            .map(|(idx, name)| ColumnDefinition {
                name: name.clone(),
                column_type: infer_type(raw.iter().map(|row| row[idx].as_str())),
            })
            .collect();
        let mut rows = Vec::new();
        for (i, record) in raw.iter().enumerate() {
            if record.len() != schema.len() {
                return Err(LoadError::Ingestion {
                    row: i + 1,
                    message: format!("expected {} fields, got {}", schema.len(), record.len()),
                });
            }
            let mut row = Vec::with_capacity(schema.len());
            for (field, column) in record.iter().zip(&schema) {
                let value = coerce_field(field, column.column_type).map_err(|message| {
                    LoadError::Ingestion { row: i + 1, message }
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        self.register(Table::new(table_name, schema, rows)?)
    }

    pub fn execute(&self, ast: &QueryAst) -> Result<ResultSet, EngineError> {
        Executor { db: self }.run(ast)
    }
}

/// Empty fields are NULL; booleans are the bare words true/false;
/// timestamps are ISO 8601.
fn coerce_field(field: &str, ty: ColumnType) -> Result<Value, String> {
    if field.is_empty() {
        return Ok(Value::Null);
    }
    match ty {
        ColumnType::Integer => field
            .parse::<i64>()
            .map(Value::Integer)
            .map_err(|_| format!("'{field}' is not an integer")),
        ColumnType::Float => field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Float)
            .ok_or_else(|| format!("'{field}' is not a number")),
        ColumnType::Boolean => match field {
            "true" => Ok(Value::Boolean(true)),
            "false" => Ok(Value::Boolean(false)),
            _ => Err(format!("'{field}' is not a boolean")),
        },
        ColumnType::Timestamp => DateTime::parse_from_rfc3339(field)
            .map(|dt| Value::Timestamp(dt.with_timezone(&Utc)))
            .map_err(|_| format!("'{field}' is not an ISO 8601 timestamp")),
        ColumnType::Text => Ok(Value::Text(field.to_string())),
    }
}

/// Narrowest type every non-empty value fits: integer, float, boolean,
/// timestamp, then text.
fn infer_type<'a>(values: impl Iterator<Item = &'a str> + Clone) -> ColumnType {
    let non_empty = || values.clone().filter(|v| !v.is_empty());
    if non_empty().next().is_none() {
        return ColumnType::Text;
    }
    if non_empty().all(|v| v.parse::<i64>().is_ok()) {
        return ColumnType::Integer;
    }
    if non_empty().all(|v| v.parse::<f64>().map(|f| f.is_finite()).unwrap_or(false)) {
        return ColumnType::Float;
    }
    if non_empty().all(|v| v == "true" || v == "false") {
        return ColumnType::Boolean;
    }
    if non_empty().all(|v| DateTime::parse_from_rfc3339(v).is_ok()) {
        return ColumnType::Timestamp;
    }
    ColumnType::Text
}

#[derive(Debug, Clone)]
struct SourceColumn {
    label: String,
    name: String,
    column_type: ColumnType,
}

struct Executor<'a> {
    db: &'a Database,
}

impl Executor<'_> {
    fn run(&self, ast: &QueryAst) -> Result<ResultSet, EngineError> {
        // FROM source
        let (mut registry, mut rows) = match &ast.from {
            FromSource::Table(table_ref) => {
                let table = self.db.table(&table_ref.name).ok_or_else(|| {
                    EngineError::UnknownTable { table: table_ref.name.clone() }
                })?;
                let registry = source_columns(table_ref.label(), &table.columns);
                (registry, table.rows.clone())
            }
            FromSource::Subquery(inner) => {
                let result = self.run(inner)?;
                // a subquery has no label; only bare references resolve
                (source_columns("", &result.columns), result.rows)
            }
        };

        // inner equi-joins, ON evaluated against the registry so far
        for join in &ast.joins {
            let table = self.db.table(&join.table.name).ok_or_else(|| {
                EngineError::UnknownTable { table: join.table.name.clone() }
            })?;
            registry.extend(source_columns(join.table.label(), &table.columns));
            let left_idx = resolve(&registry, &join.on_left)?;
            let right_idx = resolve(&registry, &join.on_right)?;
            let mut joined = Vec::new();
            for left_row in &rows {
                for right_row in &table.rows {
                    let mut combined = Vec::with_capacity(left_row.len() + right_row.len());
                    combined.extend_from_slice(left_row);
                    combined.extend_from_slice(right_row);
                    if compare(&combined[left_idx], &combined[right_idx], CompareOp::Eq)? {
                        joined.push(combined);
                    }
                }
            }
            rows = joined;
        }

        // WHERE
        if let Some(expr) = &ast.where_clause {
            let mut kept = Vec::with_capacity(rows.len());
            for row in rows {
                if eval_expr(expr, &registry, &row)? {
                    kept.push(row);
                }
            }
            rows = kept;
        }

        if ast.group_by.is_empty() && !ast.has_aggregates() {
            self.plain_pipeline(ast, &registry, rows)
        } else {
            self.grouped_pipeline(ast, &registry, rows)
        }
    }

    fn plain_pipeline(
        &self,
        ast: &QueryAst,
        registry: &[SourceColumn],
        rows: Vec<Vec<Value>>,
    ) -> Result<ResultSet, EngineError> {
        let columns = output_schema(ast, registry)?;

        // sort before projection: ORDER BY may use non-selected columns
        let mut indexed: Vec<(usize, Vec<Value>)> = rows.into_iter().enumerate().collect();
        if !ast.order_by.is_empty() {
            let keys: Vec<(usize, SortOrder)> = ast
                .order_by
                .iter()
                .map(|key| Ok((self.resolve_order_source(ast, registry, &key.column)?, key.order)))
                .collect::<Result<_, EngineError>>()?;
            indexed.sort_by(|(ia, a), (ib, b)| {
                for (idx, order) in &keys {
                    let ord = order_values(&a[*idx], &b[*idx]);
                    let ord = match order {
                        SortOrder::Asc => ord,
                        SortOrder::Desc => ord.reverse(),
                    };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                ia.cmp(ib)
            });
        }

        let windowed = window(indexed.into_iter().map(|(_, row)| row), ast.offset, ast.limit);

        let mut out_rows = Vec::with_capacity(windowed.len());
        let projection = projection_indices(ast, registry)?;
        for row in windowed {
            out_rows.push(projection.iter().map(|&i| row[i].clone()).collect());
        }
        Ok(ResultSet { columns, rows: out_rows })
    }

    fn grouped_pipeline(
        &self,
        ast: &QueryAst,
        registry: &[SourceColumn],
        rows: Vec<Vec<Value>>,
    ) -> Result<ResultSet, EngineError> {
        let columns = output_schema(ast, registry)?;

        for item in &ast.select {
            match item {
                SelectItem::Star => {
                    return Err(EngineError::InvalidQuery {
                        message: "'*' cannot be combined with GROUP BY or aggregates".into(),
                    });
                }
                SelectItem::Column { column, .. } if !ast.group_by.contains(column) => {
                    return Err(EngineError::InvalidQuery {
                        message: format!("column '{column}' must appear in GROUP BY"),
                    });
                }
                _ => {}
            }
        }

        let key_indices: Vec<usize> = ast
            .group_by
            .iter()
            .map(|c| resolve(registry, c))
            .collect::<Result<_, EngineError>>()?;

        // groups in first-seen order; NULL keys group together
        let mut groups: Vec<(Vec<Value>, Vec<Vec<Value>>)> = Vec::new();
        if ast.group_by.is_empty() {
            // scalar aggregates: one group, even over zero rows
            groups.push((Vec::new(), rows));
        } else {
            for row in rows {
                let key: Vec<Value> =
                    key_indices.iter().map(|&i| row[i].clone()).collect();
                match groups.iter_mut().find(|(k, _)| group_key_eq(k, &key)) {
                    Some((_, members)) => members.push(row),
                    None => groups.push((key, vec![row])),
                }
            }
        }

        let mut out_rows: Vec<Vec<Value>> = Vec::with_capacity(groups.len());
        for (key, members) in &groups {
            let mut row = Vec::with_capacity(ast.select.len());
            for item in &ast.select {
                match item {
                    SelectItem::Column { column, .. } => {
                        let pos = ast.group_by.iter().position(|c| c == column).unwrap();
                        row.push(key[pos].clone());
                    }
                    SelectItem::Aggregate { func, arg, .. } => {
                        row.push(compute_aggregate(*func, arg, registry, members)?);
                    }
                    SelectItem::Star => unreachable!("rejected above"),
                }
            }
            out_rows.push(row);
        }

        // ORDER BY over output names or group keys
        let mut indexed: Vec<(usize, Vec<Value>, Vec<Value>)> = out_rows
            .into_iter()
            .zip(groups.iter())
            .enumerate()
            .map(|(i, (row, (key, _)))| (i, row, key.clone()))
            .collect();
        if !ast.order_by.is_empty() {
            enum Target {
                Output(usize),
                Key(usize),
            }
            let mut targets = Vec::new();
            for OrderKey { column, order } in &ast.order_by {
                let by_output = column.table.is_none().then(|| {
                    output_names(ast).iter().position(|n| *n == column.column)
                });
                let target = match by_output.flatten() {
                    Some(i) => Target::Output(i),
                    None => match ast.group_by.iter().position(|c| c == column) {
                        Some(i) => Target::Key(i),
                        None => {
                            return Err(EngineError::UnknownColumn {
                                column: column.to_string(),
                            });
                        }
                    },
                };
                targets.push((target, *order));
            }
            indexed.sort_by(|(ia, row_a, key_a), (ib, row_b, key_b)| {
                for (target, order) in &targets {
                    let (a, b) = match target {
                        Target::Output(i) => (&row_a[*i], &row_b[*i]),
                        Target::Key(i) => (&key_a[*i], &key_b[*i]),
                    };
                    let ord = match order {
                        SortOrder::Asc => order_values(a, b),
                        SortOrder::Desc => order_values(a, b).reverse(),
                    };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                ia.cmp(ib)
            });
        }

        let rows = window(indexed.into_iter().map(|(_, row, _)| row), ast.offset, ast.limit);
        Ok(ResultSet { columns, rows })
    }

    /// ORDER BY resolution for plain queries: a bare name naming a select
    /// alias wins, then the source columns.
    fn resolve_order_source(
        &self,
        ast: &QueryAst,
        registry: &[SourceColumn],
        column: &ColumnRef,
    ) -> Result<usize, EngineError> {
        if column.table.is_none() {
            for item in &ast.select {
                if let SelectItem::Column { column: source, alias: Some(alias) } = item {
                    if *alias == column.column {
                        return resolve(registry, source);
                    }
                }
            }
        }
        resolve(registry, column)
    }
}

/// Source indices the plain (non-aggregate) pipeline projects, select order.
fn projection_indices(
    ast: &QueryAst,
    registry: &[SourceColumn],
) -> Result<Vec<usize>, EngineError> {
    if matches!(ast.select.as_slice(), [SelectItem::Star]) {
        return Ok((0..registry.len()).collect());
    }
    ast.select
        .iter()
        .map(|item| match item {
            SelectItem::Column { column, .. } => resolve(registry, column),
            _ => Err(EngineError::InvalidQuery {
                message: "aggregates need the grouped pipeline".into(),
            }),
        })
        .collect()
}

fn source_columns(label: &str, columns: &[ColumnDefinition]) -> Vec<SourceColumn> {
    columns
        .iter()
        .map(|c| SourceColumn {
            label: label.to_string(),
            name: c.name.clone(),
            column_type: c.column_type,
        })
        .collect()
}

fn resolve(registry: &[SourceColumn], column: &ColumnRef) -> Result<usize, EngineError> {
    match &column.table {
        Some(table) => registry
            .iter()
            .position(|c| c.label == *table && c.name == column.column)
            .ok_or_else(|| EngineError::UnknownColumn { column: column.to_string() }),
        None => {
            let mut matches = registry.iter().enumerate().filter(|(_, c)| c.name == column.column);
            match (matches.next(), matches.next()) {
                (Some((i, _)), None) => Ok(i),
                (Some(_), Some(_)) => {
                    Err(EngineError::AmbiguousColumn { column: column.column.clone() })
                }
                (None, _) => Err(EngineError::UnknownColumn { column: column.to_string() }),
            }
        }
    }
}

fn window(
    rows: impl Iterator<Item = Vec<Value>>,
    offset: Option<u64>,
    limit: Option<u64>,
) -> Vec<Vec<Value>> {
    let skip = offset.unwrap_or(0) as usize;
    match limit {
        Some(limit) => rows.skip(skip).take(limit as usize).collect(),
        None => rows.skip(skip).collect(),
    }
}

/// Output column names, in select order. Star expands to the source
/// columns, qualifying any name that appears in more than one source.
fn output_names(ast: &QueryAst) -> Vec<String> {
    ast.select
        .iter()
        .map(|item| match item {
            SelectItem::Star => unreachable!("star is expanded by output_schema"),
            SelectItem::Column { column, alias } => {
                alias.clone().unwrap_or_else(|| column.column.clone())
            }
            SelectItem::Aggregate { func, alias, .. } => {
                alias.clone().unwrap_or_else(|| func.output_name().to_string())
            }
        })
        .collect()
}

fn star_names(registry: &[SourceColumn]) -> Vec<String> {
    registry
        .iter()
        .map(|c| {
            let dup = registry.iter().filter(|o| o.name == c.name).count() > 1;
            if dup && !c.label.is_empty() {
                format!("{}.{}", c.label, c.name)
            } else {
                c.name.clone()
            }
        })
        .collect()
}

/// The result schema, computable without executing: needed so empty
/// results and resource metadata still carry typed columns.
fn output_schema(
    ast: &QueryAst,
    registry: &[SourceColumn],
) -> Result<Vec<ColumnDefinition>, EngineError> {
    if matches!(ast.select.as_slice(), [SelectItem::Star]) {
        return Ok(star_names(registry)
            .into_iter()
            .zip(registry)
            .map(|(name, c)| ColumnDefinition { name, column_type: c.column_type })
            .collect());
    }
    let names = output_names(ast);
    let mut out = Vec::with_capacity(names.len());
    for (item, name) in ast.select.iter().zip(names) {
        let column_type = match item {
            SelectItem::Star => unreachable!("star stands alone"),
            SelectItem::Column { column, .. } => registry[resolve(registry, column)?].column_type,
            SelectItem::Aggregate { func, arg, .. } => aggregate_type(*func, arg, registry)?,
        };
        out.push(ColumnDefinition { name, column_type });
    }
    Ok(out)
}

fn aggregate_type(
    func: AggregateFunc,
    arg: &AggregateArg,
    registry: &[SourceColumn],
) -> Result<ColumnType, EngineError> {
    let arg_type = match arg {
        AggregateArg::Star => {
            if func != AggregateFunc::Count {
                return Err(EngineError::InvalidQuery {
                    message: format!("'*' is only valid inside COUNT, not {}", func.keyword()),
                });
            }
            return Ok(ColumnType::Integer);
        }
        AggregateArg::Column(column) => registry[resolve(registry, column)?].column_type,
    };
    match func {
        AggregateFunc::Count => Ok(ColumnType::Integer),
        AggregateFunc::Sum => match arg_type {
            ColumnType::Integer => Ok(ColumnType::Integer),
            ColumnType::Float => Ok(ColumnType::Float),
            other => Err(EngineError::TypeMismatch {
                message: format!("SUM needs a numeric column, got {}", other.as_str()),
            }),
        },
        AggregateFunc::Avg => match arg_type {
            ColumnType::Integer | ColumnType::Float => Ok(ColumnType::Float),
            other => Err(EngineError::TypeMismatch {
                message: format!("AVG needs a numeric column, got {}", other.as_str()),
            }),
        },
        AggregateFunc::Min | AggregateFunc::Max => Ok(arg_type),
    }
}

/// NULLs never contribute to an aggregate; over an empty set COUNT is 0
/// and everything else is NULL.
fn compute_aggregate(
    func: AggregateFunc,
    arg: &AggregateArg,
    registry: &[SourceColumn],
    rows: &[Vec<Value>],
) -> Result<Value, EngineError> {
    let idx = match arg {
        AggregateArg::Star => {
            return Ok(Value::Integer(rows.len() as i64));
        }
        AggregateArg::Column(column) => resolve(registry, column)?,
    };
    let values: Vec<&Value> =
        rows.iter().map(|r| &r[idx]).filter(|v| !matches!(v, Value::Null)).collect();
    match func {
        AggregateFunc::Count => Ok(Value::Integer(values.len() as i64)),
        AggregateFunc::Sum | AggregateFunc::Avg => {
            if values.is_empty() {
                return Ok(Value::Null);
            }
            let mut int_sum: Option<i64> = Some(0);
            let mut float_sum = 0.0;
            for value in &values {
                match value {
                    Value::Integer(v) => {
                        int_sum = int_sum.and_then(|s| s.checked_add(*v));
                        float_sum += *v as f64;
                    }
                    Value::Float(v) => {
                        int_sum = None;
                        float_sum += v;
                    }
                    other => {
                        return Err(EngineError::TypeMismatch {
                            message: format!(
                                "{} needs numeric values, got {}",
                                func.keyword(),
                                other.type_name()
                            ),
                        });
                    }
                }
            }
            match func {
                AggregateFunc::Avg => Ok(Value::Float(float_sum / values.len() as f64)),
                _ => match int_sum {
                    Some(sum) => Ok(Value::Integer(sum)),
                    None if values.iter().all(|v| matches!(v, Value::Float(_))) => {
                        Ok(Value::Float(float_sum))
                    }
                    None => Err(EngineError::Overflow {
                        message: "SUM overflowed 64-bit integer range".into(),
                    }),
                },
            }
        }
        AggregateFunc::Min | AggregateFunc::Max => {
            let mut best: Option<&Value> = None;
            for value in values {
                best = Some(match best {
                    None => value,
                    Some(current) => {
                        let ord = order_values(value, current);
                        let take = match func {
                            AggregateFunc::Min => ord == Ordering::Less,
                            _ => ord == Ordering::Greater,
                        };
                        if take {
                            value
                        } else {
                            current
                        }
                    }
                });
            }
            Ok(best.cloned().unwrap_or(Value::Null))
        }
    }
}

fn eval_expr(expr: &Expr, registry: &[SourceColumn], row: &[Value]) -> Result<bool, EngineError> {
    match expr {
        Expr::And(left, right) => {
            Ok(eval_expr(left, registry, row)? && eval_expr(right, registry, row)?)
        }
        Expr::Or(left, right) => {
            Ok(eval_expr(left, registry, row)? || eval_expr(right, registry, row)?)
        }
        Expr::Comparison { left, op, right } => {
            let left = eval_operand(left, registry, row)?;
            let right = eval_operand(right, registry, row)?;
            compare(&left, &right, *op)
        }
    }
}

fn eval_operand(
    operand: &Operand,
    registry: &[SourceColumn],
    row: &[Value],
) -> Result<Value, EngineError> {
    match operand {
        Operand::Column(column) => Ok(row[resolve(registry, column)?].clone()),
        Operand::Literal(Literal::Integer(v)) => Ok(Value::Integer(*v)),
        Operand::Literal(Literal::Float(v)) => Ok(Value::Float(*v)),
        Operand::Literal(Literal::Str(s)) => Ok(Value::Text(s.clone())),
    }
}

/// Comparison with NULL is false, never an error; string literals coerce
/// to the timestamp or boolean side when one side has that type.
fn compare(left: &Value, right: &Value, op: CompareOp) -> Result<bool, EngineError> {
    if matches!(left, Value::Null) || matches!(right, Value::Null) {
        return Ok(false);
    }
    let ord = comparable_order(left, right)?;
    Ok(match op {
        CompareOp::Eq => ord == Ordering::Equal,
        CompareOp::Ne => ord != Ordering::Equal,
        CompareOp::Lt => ord == Ordering::Less,
        CompareOp::Le => ord != Ordering::Greater,
        CompareOp::Gt => ord == Ordering::Greater,
        CompareOp::Ge => ord != Ordering::Less,
    })
}

fn comparable_order(left: &Value, right: &Value) -> Result<Ordering, EngineError> {
    let mismatch = || EngineError::TypeMismatch {
        message: format!("cannot compare {} with {}", left.type_name(), right.type_name()),
    };
    match (left, right) {
        (Value::Integer(a), Value::Integer(b)) => Ok(a.cmp(b)),
        (Value::Integer(a), Value::Float(b)) => {
            (*a as f64).partial_cmp(b).ok_or_else(mismatch)
        }
        (Value::Float(a), Value::Integer(b)) => {
            a.partial_cmp(&(*b as f64)).ok_or_else(mismatch)
        }
        (Value::Float(a), Value::Float(b)) => a.partial_cmp(b).ok_or_else(mismatch),
        (Value::Text(a), Value::Text(b)) => Ok(a.cmp(b)),
        (Value::Timestamp(a), Value::Timestamp(b)) => Ok(a.cmp(b)),
        (Value::Timestamp(a), Value::Text(b)) => parse_ts(b).map(|b| a.cmp(&b)),
        (Value::Text(a), Value::Timestamp(b)) => parse_ts(a).map(|a| a.cmp(b)),
        (Value::Boolean(a), Value::Boolean(b)) => Ok(a.cmp(b)),
        (Value::Boolean(a), Value::Text(b)) => parse_bool(b).map(|b| a.cmp(&b)),
        (Value::Text(a), Value::Boolean(b)) => parse_bool(a).map(|a| a.cmp(b)),
        _ => Err(mismatch()),
    }
}

fn parse_ts(text: &str) -> Result<DateTime<Utc>, EngineError> {
    DateTime::parse_from_rfc3339(text).map(|dt| dt.with_timezone(&Utc)).map_err(|_| {
        EngineError::TypeMismatch {
            message: format!("'{text}' is not an ISO 8601 timestamp"),
        }
    })
}

fn parse_bool(text: &str) -> Result<bool, EngineError> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(EngineError::TypeMismatch {
            message: format!("'{text}' is not a boolean; use 'true' or 'false'"),
        }),
    }
}

/// Total order for sorting one column: NULL after every value, so NULLs
/// come last ascending and first descending once the direction flips.
pub(crate) fn order_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Null, Value::Null) => Ordering::Equal,
        (Value::Null, _) => Ordering::Greater,
        (_, Value::Null) => Ordering::Less,
        _ => comparable_order(a, b).unwrap_or(Ordering::Equal),
    }
}

/// Equality for grouping: NULLs form one group, unlike comparison.
fn group_key_eq(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Value::Null, Value::Null) => true,
            (Value::Null, _) | (_, Value::Null) => false,
            _ => comparable_order(x, y).map(|o| o == Ordering::Equal).unwrap_or(false),
        })
}
