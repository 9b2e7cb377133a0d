//! HTTP backend for human review: the suggestion task queue feeding D2 and
//! the pairwise arena feeding the ELO table.

mod api;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use holmes_core::evalkit::EloConfig;

pub use api::router;
pub use store::{ArenaEntry, Coordinator, Lease, Match, StoreError, ARENA_FILE, TASKS_FILE, VOTES_FILE};

/// Schema version carried in the top-level `"v"` field of every body.
pub const API_VERSION: u32 = 1;
pub const SESSION_HEADER: &str = "x-holmes-session";
pub const TOKEN_HEADER: &str = "x-holmes-token";
pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds `tasks.jsonl`, `votes.jsonl` and `arena.jsonl`.
    pub data_dir: PathBuf,
    /// Built UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Served at `/images`.
    pub image_dir: Option<PathBuf>,
    /// Shared token required in [`TOKEN_HEADER`] when set.
    pub token: Option<String>,
    pub lease: Duration,
    pub elo: EloConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            ui_dir: None,
            image_dir: None,
            token: None,
            lease: Duration::from_secs(600),
            elo: EloConfig::default(),
        }
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let coordinator = Coordinator::open(&cfg).map_err(|e| std::io::Error::other(e.to_string()))?;
    let app = router(coordinator, &cfg);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, app).await
}
