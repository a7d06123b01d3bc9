//! The molgrow HTTP service.
//!
//! | route | |
//! |---|---|
//! | `GET /health` | liveness |
//! | `POST /v1/enumerate` | exhaustive enumeration of small molecules |
//! | `POST /v1/score` | evaluate an objective on SMILES |
//! | `POST /v1/roundtrip` | parse, write and reparse a corpus |
//! | `POST /v1/parse` | inspect one SMILES |
//! | `POST /v1/jobs` | start a design or pretraining job |
//! | `GET /v1/jobs/{id}?since=n` | job state and progress from event `n` |
//! | `DELETE /v1/jobs/{id}` | ask a design job to stop after its epoch |

mod error;
mod jobs;
mod ops;

pub use error::AppError;
pub use jobs::JobRegistry;

use axum::routing::{get, post};
use axum::Router;
use std::net::SocketAddr;
use std::sync::Arc;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Clone, Default)]
pub struct AppState {
    pub jobs: Arc<JobRegistry>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(ops::health))
        .route("/v1/enumerate", post(ops::enumerate))
        .route("/v1/score", post(ops::score))
        .route("/v1/roundtrip", post(ops::roundtrip))
        .route("/v1/parse", post(ops::parse))
        .route("/v1/jobs", post(jobs::create))
        .route("/v1/jobs/{id}", get(jobs::status).delete(jobs::cancel))
        .with_state(state)
}

/// Serves on an already bound listener until the task is dropped or aborted.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::default())).await
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, "molgrow server listening");
    Ok((local, tokio::spawn(serve(listener))))
}
