//! HTTP service that hands task bundles to evaluators and records their
//! annotations in an append-only log.

pub mod api;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use facteval::tasks::{Study, TaskError};
use thiserror::Error;
use tokio::sync::RwLock;

pub use api::{router, AppState};
pub use store::{AnnotationStore, StoreError, LOG_FILE};

/// Optional `{evaluator_id: token}` map in the data directory.
pub const TOKENS_FILE: &str = "tokens.json";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Tasks(#[from] TaskError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {message}")]
    Tokens { path: PathBuf, message: String },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(#[source] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bundles: PathBuf,
    pub data: PathBuf,
    pub addr: SocketAddr,
    pub allow_overwrite: bool,
}

fn load_tokens(data: &Path) -> Result<Option<HashMap<String, String>>, ServiceError> {
    let path = data.join(TOKENS_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| ServiceError::Tokens {
            path,
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ServiceError::Tokens {
            path,
            message: e.to_string(),
        }),
    }
}

/// Loads the study and replays the log. Fails on a corrupt log line.
pub fn load_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let study = Study::load(&config.bundles)?;
    let store = AnnotationStore::open(&config.data.join(LOG_FILE))?;
    Ok(AppState {
        study,
        store: RwLock::new(store),
        tokens: load_tokens(&config.data)?,
        allow_overwrite: config.allow_overwrite,
    })
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(load_state(&config)?);
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.addr,
            source,
        })?;
    tracing::info!("listening on {}", config.addr);
    axum::serve(listener, router(state)).await.map_err(ServiceError::Serve)
}
