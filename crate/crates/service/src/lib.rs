//! HTTP front end for the composition pipeline.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/jobs` | multipart: `background`, `reference` (repeatable), `box`, `mode`, `profile`, `seed` |
//! | GET | `/jobs/{id}` | job status |
//! | GET | `/jobs/{id}/artifacts/{name}` | PNG, strong ETag |
//! | POST | `/jobs/{id}/actions` | review actions |
//! | POST | `/eval/batches` | start a batch |
//! | GET | `/eval/batches/{id}` | batch status |
//! | GET | `/healthz` | |
//!
//! Handlers hold no job state of their own; everything lives in the
//! artifact store so a restarted server picks up where it left off.

mod batches;
mod config;
mod error;
mod jobs;
mod status;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use insertkit::{ArtifactStore, Pipeline, ProfileTable};
use tokio::net::TcpListener;
use tokio::sync::Notify;

pub use batches::{BatchRequest, BATCH_FILE};
pub use config::{ConfigError, ServiceConfig, ENV_ARTIFACT_ROOT, ENV_LISTEN, ENV_PROFILES};
pub use error::{ApiError, ApiResult, ErrorBody};
pub use jobs::DEFAULT_PROFILE;
pub use status::{BatchState, BatchStatus, JobStatus};

pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

/// Counts background stage and batch work so shutdown can wait for it.
#[derive(Debug, Default, Clone)]
pub struct Inflight {
    inner: Arc<(AtomicUsize, Notify)>,
}

pub struct Ticket(Inflight);

impl Inflight {
    pub fn enter(&self) -> Ticket {
        self.inner.0.fetch_add(1, Ordering::SeqCst);
        Ticket(self.clone())
    }

    pub fn count(&self) -> usize {
        self.inner.0.load(Ordering::SeqCst)
    }

    pub async fn drained(&self) {
        loop {
            let notified = self.inner.1.notified();
            if self.count() == 0 {
                return;
            }
            notified.await;
        }
    }
}

impl Drop for Ticket {
    fn drop(&mut self) {
        if self.0.inner.0.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.0.inner.1.notify_waiters();
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Pipeline,
    pub profiles: Arc<ProfileTable>,
    pub batch_root: PathBuf,
    pub inflight: Inflight,
    batches: Arc<Mutex<HashMap<String, BatchStatus>>>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, profiles: ProfileTable, batch_root: impl Into<PathBuf>) -> Self {
        Self {
            pipeline,
            profiles: Arc::new(profiles),
            batch_root: batch_root.into(),
            inflight: Inflight::default(),
            batches: Arc::default(),
        }
    }

    /// Jobs under `<artifact_root>/jobs`, batches under `<artifact_root>/batches`.
    pub fn from_config(config: &ServiceConfig) -> insertkit::Result<Self> {
        let store = ArtifactStore::open(config.artifact_root.join("jobs"))?;
        Ok(Self::new(
            Pipeline::new(store),
            config.profiles.clone(),
            config.artifact_root.join("batches"),
        ))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/jobs", post(jobs::submit))
        .route("/jobs/{id}", get(jobs::get))
        .route("/jobs/{id}/artifacts/{name}", get(jobs::artifact))
        .route("/jobs/{id}/actions", post(jobs::action))
        .route("/eval/batches", post(batches::submit))
        .route("/eval/batches/{id}", get(batches::get))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] insertkit::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serves on an already-bound listener until `shutdown` resolves, then
/// waits up to `drain` for running stages to commit.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
    drain: Duration,
) -> Result<(), ServeError> {
    let inflight = state.inflight.clone();
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    if tokio::time::timeout(drain, inflight.drained()).await.is_err() {
        tracing::warn!(running = inflight.count(), "shutdown with stages still running");
    }
    Ok(())
}

/// Opens the store, marks jobs left mid-stage by a previous process as
/// failed, binds `config.listen` and serves.
pub async fn serve(config: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    let state = AppState::from_config(&config)?;
    let pipeline = state.pipeline.clone();
    let recovered = tokio::task::spawn_blocking(move || pipeline.recover_interrupted())
        .await
        .map_err(|e| std::io::Error::other(e.to_string()))??;
    if !recovered.is_empty() {
        tracing::info!(count = recovered.len(), "marked interrupted jobs failed");
    }
    let listener = TcpListener::bind(&config.listen).await.map_err(|source| ServeError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, state, shutdown, Duration::from_secs(300)).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
