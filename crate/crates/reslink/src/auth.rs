//! Bearer-token authentication. A static token map loaded at startup stands
//! in for a real OAuth flow; each token resolves to a tenant plus scopes.

use std::collections::HashMap;

use crate::model::TenantContext;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("missing Authorization header")]
    Missing,
    #[error("Authorization header must be 'Bearer <token>'")]
    Malformed,
    #[error("unknown bearer token")]
    Unknown,
}

#[derive(Debug, Clone, Default)]
pub struct TokenMap {
    tokens: HashMap<String, TenantContext>,
}

impl TokenMap {
    pub fn new(tokens: HashMap<String, TenantContext>) -> Self {
        Self { tokens }
    }

    pub fn resolve(&self, token: &str) -> Option<&TenantContext> {
        self.tokens.get(token)
    }

    /// Resolves a raw `Authorization` header value. Every failure maps to
    /// 401 upstream; the variants only shape the message.
    pub fn authorize(&self, header: Option<&str>) -> Result<TenantContext, AuthError> {
        let header = header.ok_or(AuthError::Missing)?;
        let mut parts = header.splitn(2, ' ');
        let scheme = parts.next().unwrap_or_default();
        let token = parts.next().unwrap_or_default().trim();
        if !scheme.eq_ignore_ascii_case("bearer") || token.is_empty() {
            return Err(AuthError::Malformed);
        }
        self.resolve(token).cloned().ok_or(AuthError::Unknown)
    }
}
