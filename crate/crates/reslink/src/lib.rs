pub mod auth;
pub mod config;
pub mod conformance;
pub mod engine;
pub mod guard;
pub mod mcp;
pub mod model;
pub mod rest;
pub mod scenario;
pub mod seed;
pub mod server;
pub mod sql;
pub mod store;
