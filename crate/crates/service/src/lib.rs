//! HTTP+JSON explanation service over one checkpoint.
//!
//! | route | |
//! |---|---|
//! | `GET /api/model` | model card with the checkpoint CRC |
//! | `POST /api/predict` | `{image}` → top-k and all confidences |
//! | `POST /api/explain` | `{image, method, class?, occlusion?, layer?, alpha?}` → overlay PNG, raw grid, meta |
//! | `POST /api/impressions` | `{class, config?}` → `{job_id}` (202) |
//! | `GET /api/jobs/{id}` | job record, with image and trace once done |
//!
//! Everything else falls through to the static UI directory when one is
//! configured. Errors are `{code, message}` with codes from [`ErrorCode`].

pub mod api;
pub mod error;
pub mod jobs;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tower_http::services::ServeDir;

use nnviz_core::nn::{checkpoint, Model};

pub use error::{ApiError, ErrorCode};
pub use jobs::{JobRecord, JobStatus, JobTable};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_IMAGE_BYTES: usize = 4 * 1024 * 1024;
pub const DEFAULT_JOB_TTL: Duration = Duration::from_secs(600);
pub const DEFAULT_MAX_JOBS: usize = 2;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_image_bytes: usize,
    pub job_ttl: Duration,
    /// Impression jobs allowed to run at once.
    pub max_jobs: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
            job_ttl: DEFAULT_JOB_TTL,
            max_jobs: DEFAULT_MAX_JOBS,
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Largest accepted request body: a base-64 image at the cap plus slack for the other fields.
    pub fn body_limit(&self) -> usize {
        self.max_image_bytes / 3 * 4 + 64 * 1024
    }
}

#[derive(Clone)]
pub struct AppState {
    pub model: Arc<Model>,
    pub hash: u32,
    pub jobs: Arc<JobTable>,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(model: Model, hash: u32, config: ServiceConfig) -> Self {
        Self {
            model: Arc::new(model),
            hash,
            jobs: Arc::new(JobTable::new(config.job_ttl, config.max_jobs)),
            config: Arc::new(config),
        }
    }

    pub fn load(path: &Path, config: ServiceConfig) -> nnviz_core::Result<Self> {
        let (model, hash) = checkpoint::load_with_hash(path)?;
        Ok(Self::new(model, hash, config))
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/model", get(api::model_card))
        .route("/api/predict", post(api::predict))
        .route("/api/explain", post(api::explain_handler))
        .route("/api/impressions", post(api::start_impression))
        .route("/api/jobs/{id}", get(api::job))
        .route("/api/{*rest}", get(api::not_found).post(api::not_found));
    // Oversized bodies are rejected by the handlers with a JSON error, so the
    // transport limit only guards against unbounded reads.
    let transport_limit = state.config.body_limit() * 2;
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api::not_found),
    };
    app.layer(DefaultBodyLimit::max(transport_limit)).with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
