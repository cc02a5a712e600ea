//! Python bindings for the query frontend: parse, rewrite, derive and
//! execute against an in-memory database. The HTTP server stays on the
//! Rust side; these bindings cover the pieces a host or notebook wants
//! when reasoning about queries offline.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde_json::Value as JsonValue;

use reslink::engine;
use reslink::guard;
use reslink::model;
use reslink::seed;
use reslink::sql;

fn json_to_py(py: Python<'_>, value: &JsonValue) -> Py<PyAny> {
    match value {
        JsonValue::Null => py.None(),
        JsonValue::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        JsonValue::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py).unwrap().into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py).unwrap().into_any().unbind()
            } else {
                n.as_f64()
                    .unwrap_or(f64::NAN)
                    .into_pyobject(py)
                    .unwrap()
                    .into_any()
                    .unbind()
            }
        }
        JsonValue::String(s) => s.into_pyobject(py).unwrap().into_any().unbind(),
        JsonValue::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)).unwrap();
            }
            list.into_any().unbind()
        }
        JsonValue::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)).unwrap();
            }
            dict.into_any().unbind()
        }
    }
}

/// A parsed SELECT statement. Immutable; every transformation returns a
/// new query.
#[pyclass]
#[derive(Clone)]
struct Query {
    ast: sql::ast::QueryAst,
}

#[pymethods]
impl Query {
    /// Parses one SELECT statement, raising ValueError with the byte
    /// position on anything outside the grammar.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        match sql::parse(text) {
            Ok(ast) => Ok(Self { ast }),
            Err(e) => Err(PyValueError::new_err(format!(
                "{} at byte {}: {}",
                e.kind.label(),
                e.position,
                e.message
            ))),
        }
    }

    /// Canonical SQL text of this query.
    fn render(&self) -> String {
        sql::render(&self.ast)
    }

    /// The query with the tenant filter injected on every referenced table.
    fn rewrite(&self, tenant: &str, policy: &Policy) -> PyResult<Self> {
        let ctx = model::TenantContext::new(tenant, [model::Scope::Read])
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        guard::rewrite_for_tenant(&self.ast, &ctx, &policy.inner)
            .map(|ast| Self { ast })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// The query bounded to at most `cap` preview rows.
    fn cap_preview(&self, cap: u64) -> Self {
        Self { ast: guard::cap_preview(&self.ast, cap) }
    }

    /// The COUNT(*) companion over this query's full result.
    fn derive_count(&self) -> Self {
        Self { ast: guard::derive_count(&self.ast) }
    }

    /// The query a resource stores: this one minus LIMIT and OFFSET.
    fn dataset(&self) -> Self {
        Self { ast: guard::dataset_query(&self.ast) }
    }

    /// Table names referenced by FROM and JOIN clauses.
    fn tables(&self) -> Vec<String> {
        self.ast.referenced_tables().into_iter().map(str::to_string).collect()
    }

    #[getter]
    fn limit(&self) -> Option<u64> {
        self.ast.limit
    }

    #[getter]
    fn offset(&self) -> Option<u64> {
        self.ast.offset
    }

    #[getter]
    fn has_aggregates(&self) -> bool {
        self.ast.has_aggregates()
    }

    fn __str__(&self) -> String {
        self.render()
    }

    fn __repr__(&self) -> String {
        format!("Query({:?})", self.render())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

/// Table whitelist with tenant columns, plus the preview row cap.
#[pyclass]
struct Policy {
    inner: guard::TenantPolicy,
}

#[pymethods]
impl Policy {
    #[new]
    fn new(tables: BTreeMap<String, String>, preview_cap: u64) -> PyResult<Self> {
        guard::TenantPolicy::new(tables, preview_cap)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn preview_cap(&self) -> u64 {
        self.inner.preview_cap()
    }

    fn tables(&self) -> Vec<String> {
        self.inner.tables().map(str::to_string).collect()
    }
}

/// In-memory tables loaded from CSV, executing parsed queries.
#[pyclass]
struct Database {
    inner: Arc<engine::Database>,
}

#[pymethods]
impl Database {
    #[new]
    fn new() -> Self {
        Self { inner: Arc::new(engine::Database::new()) }
    }

    /// Loads a CSV with inferred column types as table `name`.
    fn load_csv(&self, path: PathBuf, name: &str) -> PyResult<()> {
        self.inner
            .load_csv_inferred(&path, name)
            .map(|_| ())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn table_names(&self) -> Vec<String> {
        self.inner.table_names()
    }

    /// Runs a query and returns its rows as a list of dicts.
    fn execute(&self, py: Python<'_>, query: &Query) -> PyResult<Py<PyAny>> {
        let result = self
            .inner
            .execute(&query.ast)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let records: Vec<JsonValue> =
            result.records().into_iter().map(JsonValue::Object).collect();
        Ok(json_to_py(py, &JsonValue::Array(records)))
    }
}

/// Writes the deterministic 250-row orders dataset to `path`.
#[pyfunction]
fn seed_csv(path: PathBuf) -> PyResult<()> {
    seed::write_orders_csv(&path).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn new_resource_id() -> String {
    reslink::store::new_resource_id()
}

#[pyfunction]
fn make_resource_uri(base_url: &str, id: &str) -> PyResult<String> {
    model::make_resource_uri(base_url, id).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The discovery document REST clients fetch from /.well-known.
#[pyfunction]
fn well_known_document(py: Python<'_>) -> Py<PyAny> {
    json_to_py(py, &reslink::rest::well_known_document())
}

#[pymodule]
fn reslink_py(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_class::<Query>()?;
    module.add_class::<Policy>()?;
    module.add_class::<Database>()?;
    module.add_function(wrap_pyfunction!(seed_csv, module)?)?;
    module.add_function(wrap_pyfunction!(new_resource_id, module)?)?;
    module.add_function(wrap_pyfunction!(make_resource_uri, module)?)?;
    module.add_function(wrap_pyfunction!(well_known_document, module)?)?;
    module.add("GRAMMAR", sql::GRAMMAR)?;
    module.add("DEFAULT_PREVIEW_CAP", guard::DEFAULT_PREVIEW_CAP)?;
    module.add("MAX_PAGE_LIMIT", reslink::store::MAX_PAGE_LIMIT)?;
    Ok(())
}
