//! Server assembly: loads the configured tables, builds the shared state,
//! mounts the REST and MCP routers, and runs the expiry sweeper.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::Router;
use chrono::Utc;
use tokio::net::TcpListener;

use crate::auth::TokenMap;
use crate::config::{ConfigError, ServerConfig};
use crate::engine::Database;
use crate::guard::TenantPolicy;
use crate::model::ColumnType;
use crate::store::{PersistenceStrategy, ResourceStore};
use crate::{mcp, rest};

/// Everything handlers share. Built once at startup, immutable except for
/// the store's interior state.
pub struct AppState {
    pub store: ResourceStore,
    pub policy: TenantPolicy,
    pub tokens: TokenMap,
    /// Resolved resource base URL; prefix of every emitted ResourceLink.uri
    /// and the baseUrl advertised by initialize.
    pub base_url: String,
    pub strategy: PersistenceStrategy,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("table '{table}': {message}")]
    Load { table: String, message: String },
    #[error("failed to bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn build_state(
    config: &ServerConfig,
    actual_port: u16,
) -> Result<Arc<AppState>, ServeError> {
    let policy = config.policy()?;
    let db = Database::new();
    for (name, table_config) in &config.tables {
        let table = db
            .load_csv_inferred(&table_config.csv, name)
            .map_err(|e| ServeError::Load { table: name.clone(), message: e.to_string() })?;
        let tenant_column =
            table.columns.iter().find(|c| c.name == table_config.tenant_column);
        match tenant_column {
            None => {
                return Err(ServeError::Load {
                    table: name.clone(),
                    message: format!(
                        "tenant column '{}' not present in {}",
                        table_config.tenant_column,
                        table_config.csv.display()
                    ),
                })
            }
            Some(column) if column.column_type != ColumnType::Text => {
                return Err(ServeError::Load {
                    table: name.clone(),
                    message: format!(
                        "tenant column '{}' must be text, found {}",
                        column.name,
                        column.column_type.as_str()
                    ),
                })
            }
            Some(_) => {}
        }
    }
    let base_url = config.resolved_base_url(actual_port);
    let store = ResourceStore::new(
        Arc::new(db),
        base_url.clone(),
        config.capacity,
        config.default_ttl_seconds,
        config.sliding_expiry,
    );
    Ok(Arc::new(AppState {
        store,
        policy,
        tokens: config.tokens(),
        base_url,
        strategy: config.strategy,
    }))
}

pub fn build_router(config: &ServerConfig, state: Arc<AppState>) -> Router {
    let resources = rest::resources_router(Arc::clone(&state));
    let base_path = url::Url::parse(&state.base_url)
        .map(|u| u.path().to_string())
        .unwrap_or_else(|_| "/resources".to_string());
    let router = Router::new().merge(rest::well_known_router());
    let router = if base_path == "/" || base_path.is_empty() {
        router.merge(resources)
    } else {
        router.nest(&base_path, resources)
    };
    router
        .route(&config.mcp_path, axum::routing::post(mcp::mcp_handler))
        .with_state(state)
}

fn spawn_sweeper(state: Arc<AppState>, interval_seconds: u64) {
    tokio::spawn(async move {
        let mut interval =
            tokio::time::interval(std::time::Duration::from_secs(interval_seconds));
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            let collected = state.store.sweep(Utc::now());
            if !collected.is_empty() {
                tracing::info!(count = collected.len(), "swept expired resources");
            }
        }
    });
}

struct Bound {
    listener: TcpListener,
    addr: SocketAddr,
    state: Arc<AppState>,
    router: Router,
}

async fn bind(config: &ServerConfig) -> Result<Bound, ServeError> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let state = build_state(config, addr.port())?;
    let router = build_router(config, Arc::clone(&state));
    spawn_sweeper(Arc::clone(&state), config.sweep_interval_seconds);
    Ok(Bound { listener, addr, state, router })
}

/// Serves until interrupted; the CLI entry point.
pub async fn run(config: ServerConfig) -> Result<(), ServeError> {
    let bound = bind(&config).await?;
    tracing::info!(
        addr = %bound.addr,
        base_url = %bound.state.base_url,
        mcp_path = %config.mcp_path,
        "serving"
    );
    axum::serve(bound.listener, bound.router)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await?;
    Ok(())
}

/// A server on its own runtime thread, for tests and embedding. Shuts down
/// on drop.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub base_url: String,
    pub mcp_url: String,
    state: Arc<AppState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn spawn(config: ServerConfig) -> Result<Self, ServeError> {
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
        let mcp_path = config.mcp_path.clone();
        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            runtime.block_on(async move {
                match bind(&config).await {
                    Ok(bound) => {
                        ready_tx
                            .send(Ok((bound.addr, Arc::clone(&bound.state))))
                            .ok();
                        axum::serve(bound.listener, bound.router)
                            .with_graceful_shutdown(async {
                                shutdown_rx.await.ok();
                            })
                            .await
                            .ok();
                    }
                    Err(e) => {
                        ready_tx.send(Err(e)).ok();
                    }
                }
            });
        });
        let (addr, state) = ready_rx
            .recv()
            .map_err(|_| ServeError::Io(std::io::Error::other("server thread died")))??;
        Ok(Self {
            addr,
            base_url: state.base_url.clone(),
            mcp_url: format!("http://{addr}{mcp_path}"),
            state,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        })
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(shutdown) = self.shutdown.take() {
            shutdown.send(()).ok();
        }
        if let Some(thread) = self.thread.take() {
            thread.join().ok();
        }
    }
}
