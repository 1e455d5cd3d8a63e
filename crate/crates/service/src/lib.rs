//! JSON-over-HTTP inference service.
//!
//! Routes, all under `/api/v1`:
//!
//! - `GET  /health`
//! - `POST /predict/yield`   `{area, state, season}` → `{predicted_yield, model_version}`
//! - `POST /predict/impact`  `{temperature_c, humidity_pct, pressure_mbar}` → `{expected_yield_pct, impact}`
//! - `POST /classify/leaf`   multipart field `image` → `{class, confidence_pct, species, category, ailment}`
//! - `POST /reload`          header `X-Reload-Secret`
//!
//! Errors use the [`ApiError`] envelope.

pub mod config;
pub mod error;
pub mod registry;
pub mod routes;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::http::{header, Method};
use axum::routing::{get, post};
use axum::Router;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{Any, CorsLayer};

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorCode};
pub use registry::Registry;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model directory: {0}")]
    ModelDir(String),
    #[error("cannot load model: {0}")]
    Model(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// State shared by all handlers.
#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    registry: Arc<RwLock<Arc<Registry>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, registry: Registry) -> Self {
        AppState {
            config: Arc::new(config),
            registry: routes::shared(registry),
        }
    }

    pub fn snapshot(&self) -> Arc<Registry> {
        Arc::clone(&self.registry.read().unwrap_or_else(|e| e.into_inner()))
    }

    fn swap(&self, registry: Registry) {
        *self.registry.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(registry);
    }
}

pub fn app(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes;
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let api = Router::new()
        .route("/health", get(routes::health))
        .route("/predict/yield", post(routes::predict_yield))
        .route("/predict/impact", post(routes::predict_impact))
        .route("/classify/leaf", post(routes::classify_leaf))
        .route("/reload", post(routes::reload));
    Router::new()
        .nest("/api/v1", api)
        .fallback(routes::not_found)
        .method_not_allowed_fallback(routes::not_found)
        .layer(DefaultBodyLimit::max(limit))
        .layer(axum::middleware::from_fn_with_state(state.clone(), routes::enforce_limits))
        .layer(CatchPanicLayer::custom(routes::panic_response))
        .layer(cors)
        .with_state(state)
}

/// A running server. Dropping the handle leaves the server running until
/// the process exits; call [`ServiceHandle::shutdown`] to stop it.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// Stops accepting connections, drains in-flight requests and waits.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        let _ = self.shutdown.send(());
        self.task
            .await
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
        Ok(())
    }
}

/// Validates `config`, binds and starts serving `registry` in the background.
pub async fn serve(config: ServiceConfig, registry: Registry) -> Result<ServiceHandle, ServiceError> {
    config.validate()?;
    let addr = config.addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let router = app(AppState::new(config, registry));
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    log::info!("listening on http://{addr}");
    Ok(ServiceHandle {
        addr,
        shutdown: tx,
        task,
    })
}

/// Loads models from `config.model_dir`, serves until Ctrl-C, then shuts down gracefully.
pub async fn run_until_signal(config: ServiceConfig) -> Result<(), ServiceError> {
    config.validate()?;
    let registry = Registry::load(config.model_dir.as_deref())?;
    log::info!("loaded models: {:?}", registry.model_names());
    let handle = serve(config, registry).await?;
    tokio::signal::ctrl_c().await?;
    log::info!("shutting down");
    handle.shutdown().await
}
