//! Server configuration. One JSON file holds everything; the only
//! environment override is PORT, applied explicitly by the serve command.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auth::TokenMap;
use crate::guard::{TenantPolicy, DEFAULT_PREVIEW_CAP, MAX_PREVIEW_CAP};
use crate::model::{make_resource_uri, Scope, TenantContext};
use crate::store::{PersistenceStrategy, DEFAULT_CAPACITY, DEFAULT_TTL_SECONDS};

pub const DEFAULT_SWEEP_INTERVAL_SECONDS: u64 = 30;
pub const DEFAULT_MCP_PATH: &str = "/mcp";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config error at {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub tenant_id: String,
    pub scopes: Vec<Scope>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableConfig {
    pub csv: PathBuf,
    pub tenant_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Absolute base for resource URIs. When absent it is derived from the
    /// actual listen address after bind, which is what port 0 setups want.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_mcp_path")]
    pub mcp_path: String,
    #[serde(default = "default_preview_cap")]
    pub preview_cap: u64,
    #[serde(default = "default_ttl")]
    pub default_ttl_seconds: u64,
    #[serde(default = "default_sweep_interval")]
    pub sweep_interval_seconds: u64,
    #[serde(default)]
    pub sliding_expiry: bool,
    #[serde(default = "default_strategy")]
    pub strategy: PersistenceStrategy,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    pub token_map: BTreeMap<String, TokenEntry>,
    pub tables: BTreeMap<String, TableConfig>,
}

fn default_host() -> String {
    "127.0.0.1".to_string()
}

fn default_port() -> u16 {
    8080
}

fn default_mcp_path() -> String {
    DEFAULT_MCP_PATH.to_string()
}

fn default_preview_cap() -> u64 {
    DEFAULT_PREVIEW_CAP
}

fn default_ttl() -> u64 {
    DEFAULT_TTL_SECONDS
}

fn default_sweep_interval() -> u64 {
    DEFAULT_SWEEP_INTERVAL_SECONDS
}

fn default_strategy() -> PersistenceStrategy {
    PersistenceStrategy::StoreResults
}

fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let deserializer = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(deserializer)
            .map_err(|e| ConfigError::new(e.path().to_string(), e.inner().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// PORT is the single supported environment override.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(raw) = std::env::var("PORT") {
            self.port = raw
                .parse()
                .map_err(|_| ConfigError::new("PORT", format!("not a port number: '{raw}'")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.host.is_empty() {
            return Err(ConfigError::new("host", "must not be empty"));
        }
        if let Some(base_url) = &self.base_url {
            make_resource_uri(base_url, "probe0000")
                .map_err(|e| ConfigError::new("base_url", e.message))?;
        }
        if !self.mcp_path.starts_with('/') || self.mcp_path.len() < 2 {
            return Err(ConfigError::new("mcp_path", "must be an absolute path like /mcp"));
        }
        if self.preview_cap < 1 || self.preview_cap > MAX_PREVIEW_CAP {
            return Err(ConfigError::new(
                "preview_cap",
                format!("must be between 1 and {MAX_PREVIEW_CAP}"),
            ));
        }
        if self.default_ttl_seconds < 1 {
            return Err(ConfigError::new("default_ttl_seconds", "must be at least 1"));
        }
        if self.sweep_interval_seconds < 1 {
            return Err(ConfigError::new("sweep_interval_seconds", "must be at least 1"));
        }
        if self.capacity < 1 {
            return Err(ConfigError::new("capacity", "must be at least 1"));
        }
        if self.token_map.is_empty() {
            return Err(ConfigError::new("token_map", "must define at least one token"));
        }
        for (token, entry) in &self.token_map {
            let field = format!("token_map.{token}");
            if entry.tenant_id.contains('\'') {
                return Err(ConfigError::new(
                    format!("{field}.tenant_id"),
                    "must not contain single quotes",
                ));
            }
            TenantContext::new(&entry.tenant_id, entry.scopes.iter().copied())
                .map_err(|e| ConfigError::new(format!("{field}.{}", e.field), e.message))?;
        }
        if self.tables.is_empty() {
            return Err(ConfigError::new("tables", "must define at least one table"));
        }
        for (name, table) in &self.tables {
            if name.is_empty() {
                return Err(ConfigError::new("tables", "table names must not be empty"));
            }
            if table.tenant_column.is_empty() {
                return Err(ConfigError::new(
                    format!("tables.{name}.tenant_column"),
                    "must not be empty",
                ));
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<TenantPolicy, ConfigError> {
        let columns: BTreeMap<String, String> = self
            .tables
            .iter()
            .map(|(name, table)| (name.clone(), table.tenant_column.clone()))
            .collect();
        TenantPolicy::new(columns, self.preview_cap)
            .map_err(|e| ConfigError::new(e.field, e.message))
    }

    pub fn tokens(&self) -> TokenMap {
        let map: HashMap<String, TenantContext> = self
            .token_map
            .iter()
            .map(|(token, entry)| {
                let ctx = TenantContext::new(&entry.tenant_id, entry.scopes.iter().copied())
                    .expect("token entries validated on load");
                (token.clone(), ctx)
            })
            .collect();
        TokenMap::new(map)
    }

    /// The advertised resource base: explicit config wins, otherwise derived
    /// from the address the listener actually bound.
    pub fn resolved_base_url(&self, actual_port: u16) -> String {
        match &self.base_url {
            Some(base_url) => base_url.trim_end_matches('/').to_string(),
            None => format!("http://{}:{}/resources", self.host, actual_port),
        }
    }
}
