//! Resource lifecycle: creation, out-of-band paging, expiry, pinning,
//! deletion and the background sweep.
//!
//! Records live behind one RwLock as `Arc` snapshots; every mutation
//! replaces the whole record, so a concurrent reader either sees the old
//! complete record or the new one, never a half-write. All time-dependent
//! operations take `now` as a parameter; only the server binds them to the
//! wall clock, which keeps lifecycle tests deterministic.

use std::collections::HashMap;
use std::sync::Arc;

use base64::Engine as _;
use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::engine::{Database, EngineError, ResultSet, Value};
use crate::guard;
use crate::model::{
    make_resource_uri, ColumnDefinition, DataPage, QueryMetadata, ResourceLink, SortOrder,
    TenantContext,
};
use crate::sql::ast::{ColumnRef, OrderKey, QueryAst};
use crate::sql::render;

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_TTL_SECONDS: u64 = 900;
pub const MAX_PAGE_LIMIT: u64 = 1000;
pub const DEFAULT_PAGE_LIMIT: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersistenceStrategy {
    /// Materialize the full result at creation; pages are immutable.
    StoreResults,
    /// Store the dataset query; every page re-executes it.
    StoreQuery,
}

#[derive(Debug, Clone)]
pub enum ResourcePayload {
    Results(ResultSet),
    Query(QueryAst),
}

#[derive(Debug, Clone)]
pub struct ResourceRecord {
    pub id: String,
    pub owner: String,
    pub created_at: DateTime<Utc>,
    pub expires_at: Option<DateTime<Utc>>,
    pub pinned: bool,
    pub strategy: PersistenceStrategy,
    pub payload: ResourcePayload,
    pub columns: Vec<ColumnDefinition>,
    pub total_count_at_creation: u64,
}

impl ResourceRecord {
    fn expired(&self, now: DateTime<Utc>) -> bool {
        self.expires_at.is_some_and(|at| at <= now)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("resource not found")]
    NotFound,
    #[error("resource has expired")]
    Gone,
    #[error("manage scope required")]
    Forbidden,
    #[error("{message}")]
    Validation { message: String, valid_sort_fields: Option<Vec<String>> },
    #[error("resource capacity reached")]
    Capacity,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl StoreError {
    pub fn validation(message: impl Into<String>) -> Self {
        StoreError::Validation { message: message.into(), valid_sort_fields: None }
    }
}

/// 22 URL-safe characters from 16 random bytes.
pub fn new_resource_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(bytes)
}

pub struct ResourceStore {
    db: Arc<Database>,
    base_url: String,
    capacity: usize,
    default_ttl_seconds: u64,
    sliding_expiry: bool,
    resources: RwLock<HashMap<String, Arc<ResourceRecord>>>,
}

impl ResourceStore {
    pub fn new(
        db: Arc<Database>,
        base_url: impl Into<String>,
        capacity: usize,
        default_ttl_seconds: u64,
        sliding_expiry: bool,
    ) -> Self {
        Self {
            db,
            base_url: base_url.into(),
            capacity,
            default_ttl_seconds,
            sliding_expiry,
            resources: RwLock::new(HashMap::new()),
        }
    }

    pub fn default_ttl_seconds(&self) -> u64 {
        self.default_ttl_seconds
    }

    pub fn database(&self) -> &Arc<Database> {
        &self.db
    }

    pub fn len(&self) -> usize {
        self.resources.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.read().is_empty()
    }

    /// Creates a resource for an already tenant-rewritten query. The stored
    /// dataset is the query minus LIMIT/OFFSET (those clauses only window
    /// the preview), so total_count, the COUNT companion and page math all
    /// describe the same row set.
    pub fn create_resource(
        &self,
        rewritten: &QueryAst,
        ctx: &TenantContext,
        strategy: PersistenceStrategy,
        ttl_seconds: u64,
        now: DateTime<Utc>,
    ) -> Result<(Arc<ResourceRecord>, ResourceLink, QueryMetadata), StoreError> {
        if ttl_seconds == 0 {
            return Err(StoreError::validation("ttl_seconds must be at least 1"));
        }
        let dataset = guard::dataset_query(rewritten);
        let total_count = self.execute_count(&dataset)?;
        let (payload, columns, size) = match strategy {
            PersistenceStrategy::StoreResults => {
                let result = self.db.execute(&dataset)?;
                let columns = result.columns.clone();
                let size = serde_json::to_vec(&result.records())
                    .map(|bytes| bytes.len() as u64)
                    .ok();
                (ResourcePayload::Results(result), columns, size)
            }
            PersistenceStrategy::StoreQuery => {
                // LIMIT 0 execution yields the schema without the rows
                let mut probe = dataset.clone();
                probe.limit = Some(0);
                let columns = self.db.execute(&probe)?.columns;
                (ResourcePayload::Query(dataset.clone()), columns, None)
            }
        };
        let record = ResourceRecord {
            id: new_resource_id(),
            owner: ctx.tenant_id.clone(),
            created_at: now,
            expires_at: Some(now + Duration::seconds(ttl_seconds as i64)),
            pinned: false,
            strategy,
            payload,
            columns,
            total_count_at_creation: total_count,
        };
        let description = format!("Complete result set for: {}", render(&dataset));
        self.insert(record, size, Some(description))
    }

    /// Wraps an already computed result (derived summaries) as a new
    /// store-results resource.
    pub fn create_materialized(
        &self,
        result: ResultSet,
        description: impl Into<String>,
        ctx: &TenantContext,
        ttl_seconds: u64,
        now: DateTime<Utc>,
    ) -> Result<(Arc<ResourceRecord>, ResourceLink, QueryMetadata), StoreError> {
        if ttl_seconds == 0 {
            return Err(StoreError::validation("ttl_seconds must be at least 1"));
        }
        let columns = result.columns.clone();
        let total_count = result.len() as u64;
        let size =
            serde_json::to_vec(&result.records()).map(|bytes| bytes.len() as u64).ok();
        let record = ResourceRecord {
            id: new_resource_id(),
            owner: ctx.tenant_id.clone(),
            created_at: now,
            expires_at: Some(now + Duration::seconds(ttl_seconds as i64)),
            pinned: false,
            strategy: PersistenceStrategy::StoreResults,
            payload: ResourcePayload::Results(result),
            columns,
            total_count_at_creation: total_count,
        };
        self.insert(record, size, Some(description.into()))
    }

    fn insert(
        &self,
        record: ResourceRecord,
        size: Option<u64>,
        description: Option<String>,
    ) -> Result<(Arc<ResourceRecord>, ResourceLink, QueryMetadata), StoreError> {
        let uri = make_resource_uri(&self.base_url, &record.id)
            .map_err(|e| StoreError::validation(e.to_string()))?;
        let link = ResourceLink {
            uri,
            name: record.id.clone(),
            description,
            mime_type: Some("application/json".to_string()),
            size,
        };
        let metadata = QueryMetadata::new(
            record.total_count_at_creation,
            record.created_at,
            record.columns.clone(),
            record.expires_at,
        )
        .map_err(|e| StoreError::validation(e.to_string()))?;
        let record = Arc::new(record);
        {
            let mut resources = self.resources.write();
            if resources.len() >= self.capacity {
                return Err(StoreError::Capacity);
            }
            resources.insert(record.id.clone(), Arc::clone(&record));
        }
        Ok((record, link, metadata))
    }

    /// Owner mismatch and unknown ids are indistinguishable by design.
    fn live_record(
        &self,
        id: &str,
        ctx: &TenantContext,
        now: DateTime<Utc>,
    ) -> Result<Arc<ResourceRecord>, StoreError> {
        let record = self.resources.read().get(id).cloned().ok_or(StoreError::NotFound)?;
        if record.owner != ctx.tenant_id {
            return Err(StoreError::NotFound);
        }
        if record.expired(now) {
            return Err(StoreError::Gone);
        }
        Ok(record)
    }

    fn slide(&self, record: &Arc<ResourceRecord>, now: DateTime<Utc>) -> Arc<ResourceRecord> {
        if !self.sliding_expiry || record.pinned {
            return Arc::clone(record);
        }
        let mut updated = (**record).clone();
        updated.expires_at = Some(now + Duration::seconds(self.default_ttl_seconds as i64));
        let updated = Arc::new(updated);
        self.resources.write().insert(updated.id.clone(), Arc::clone(&updated));
        updated
    }

    fn metadata_of(&self, record: &ResourceRecord) -> Result<QueryMetadata, StoreError> {
        let total_count = match (&record.strategy, &record.payload) {
            (PersistenceStrategy::StoreResults, _) => record.total_count_at_creation,
            // recomputed so clients can detect stale references
            (PersistenceStrategy::StoreQuery, ResourcePayload::Query(ast)) => {
                self.execute_count(&guard::dataset_query(ast))?
            }
            (PersistenceStrategy::StoreQuery, ResourcePayload::Results(_)) => {
                unreachable!("payload kind always matches strategy")
            }
        };
        QueryMetadata::new(
            total_count,
            record.created_at,
            record.columns.clone(),
            record.expires_at,
        )
        .map_err(|e| StoreError::validation(e.to_string()))
    }

    pub fn get_metadata(
        &self,
        id: &str,
        ctx: &TenantContext,
        now: DateTime<Utc>,
    ) -> Result<QueryMetadata, StoreError> {
        let record = self.live_record(id, ctx, now)?;
        let record = self.slide(&record, now);
        self.metadata_of(&record)
    }

    pub fn fetch_page(
        &self,
        id: &str,
        ctx: &TenantContext,
        offset: u64,
        limit: u64,
        sort: Option<(String, SortOrder)>,
        now: DateTime<Utc>,
    ) -> Result<DataPage, StoreError> {
        if limit < 1 || limit > MAX_PAGE_LIMIT {
            return Err(StoreError::validation(format!(
                "limit must be between 1 and {MAX_PAGE_LIMIT}"
            )));
        }
        let record = self.live_record(id, ctx, now)?;
        let record = self.slide(&record, now);

        if let Some((field, _)) = &sort {
            if !record.columns.iter().any(|c| c.name == *field) {
                return Err(StoreError::Validation {
                    message: format!("unknown sort field '{field}'"),
                    valid_sort_fields: Some(
                        record.columns.iter().map(|c| c.name.clone()).collect(),
                    ),
                });
            }
        }

        let (all_records, total_count) = match &record.payload {
            ResourcePayload::Results(result) => {
                let rows = match &sort {
                    None => result.records(),
                    Some((field, order)) => {
                        sorted_records(result, field, *order).records()
                    }
                };
                (rows, record.total_count_at_creation)
            }
            ResourcePayload::Query(ast) => {
                let mut query = ast.clone();
                if let Some((field, order)) = &sort {
                    query.order_by = vec![OrderKey {
                        column: ColumnRef::bare(field.clone()),
                        order: *order,
                    }];
                }
                let result = self.db.execute(&query)?;
                let total = result.len() as u64;
                (result.records(), total)
            }
        };

        let page: Vec<_> = all_records
            .into_iter()
            .skip(offset as usize)
            .take(limit as usize)
            .collect();
        Ok(DataPage::new(total_count, offset, page))
    }

    /// Full data of a live resource: the materialized rows, or a fresh
    /// re-execution under store-query.
    pub fn resource_result(
        &self,
        id: &str,
        ctx: &TenantContext,
        now: DateTime<Utc>,
    ) -> Result<(Arc<ResourceRecord>, ResultSet), StoreError> {
        let record = self.live_record(id, ctx, now)?;
        let record = self.slide(&record, now);
        let result = match &record.payload {
            ResourcePayload::Results(result) => result.clone(),
            ResourcePayload::Query(ast) => self.db.execute(ast)?,
        };
        Ok((record, result))
    }

    pub fn pin(
        &self,
        id: &str,
        ctx: &TenantContext,
        now: DateTime<Utc>,
    ) -> Result<QueryMetadata, StoreError> {
        if !ctx.has_scope(crate::model::Scope::Manage) {
            return Err(StoreError::Forbidden);
        }
        let record = self.live_record(id, ctx, now)?;
        let pinned = if record.pinned {
            record
        } else {
            let mut updated = (*record).clone();
            updated.pinned = true;
            updated.expires_at = None;
            let updated = Arc::new(updated);
            self.resources.write().insert(updated.id.clone(), Arc::clone(&updated));
            updated
        };
        self.metadata_of(&pinned)
    }

    pub fn delete(&self, id: &str, ctx: &TenantContext) -> Result<(), StoreError> {
        if !ctx.has_scope(crate::model::Scope::Manage) {
            return Err(StoreError::Forbidden);
        }
        let mut resources = self.resources.write();
        match resources.get(id) {
            Some(record) if record.owner == ctx.tenant_id => {
                resources.remove(id);
                Ok(())
            }
            _ => Err(StoreError::NotFound),
        }
    }

    /// Removes every unpinned record whose expiry has passed; returns the
    /// collected ids sorted for stable logs.
    pub fn sweep(&self, now: DateTime<Utc>) -> Vec<String> {
        let mut resources = self.resources.write();
        let mut collected: Vec<String> = resources
            .values()
            .filter(|r| !r.pinned && r.expired(now))
            .map(|r| r.id.clone())
            .collect();
        collected.sort();
        for id in &collected {
            resources.remove(id);
        }
        collected
    }

    /// Runs the COUNT companion query; its result is always one integer row.
    fn execute_count(&self, dataset: &QueryAst) -> Result<u64, StoreError> {
        let count_ast = guard::derive_count(dataset);
        let result = self.db.execute(&count_ast)?;
        match result.rows.first().and_then(|r| r.first()) {
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
            other => Err(StoreError::validation(format!(
                "count query returned {other:?} instead of a non-negative integer"
            ))),
        }
    }
}

/// Stable re-sort of a materialized result on one output column; ties keep
/// the stored order, mirroring the engine's physical-index tie-break.
fn sorted_records(result: &ResultSet, field: &str, order: SortOrder) -> ResultSet {
    let idx = result
        .columns
        .iter()
        .position(|c| c.name == field)
        .expect("sort field validated against columns");
    let mut rows = result.rows.clone();
    rows.sort_by(|a, b| {
        let ord = crate::engine::order_values(&a[idx], &b[idx]);
        match order {
            SortOrder::Asc => ord,
            SortOrder::Desc => ord.reverse(),
        }
    });
    ResultSet { columns: result.columns.clone(), rows }
}
