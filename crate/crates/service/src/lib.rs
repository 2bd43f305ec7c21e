//! JSON-over-HTTP service for human-in-the-loop CAAF sessions.
//!
//! | Method | Path | Body / result |
//! |---|---|---|
//! | GET | `/healthz` | [`api::Health`] |
//! | GET | `/datasets` | list of [`api::DatasetInfo`] |
//! | POST | `/sessions` | [`api::CreateSession`] → [`api::SessionView`] |
//! | GET | `/sessions/{id}` | [`api::SessionView`] |
//! | POST | `/sessions/{id}/labels` | [`api::SubmitLabels`] → [`api::SessionView`] |
//! | GET | `/sessions/{id}/transcript` | index-level session transcript |
//! | GET | `/thumbnails/{dataset}/{id}` | image file or SVG placeholder |
//!
//! Failures carry an [`error::ErrorBody`] `{code, message}`.

pub mod api;
pub mod error;
pub mod routes;
pub mod store;

use std::sync::Arc;

pub use error::{ApiError, ErrorBody};
pub use routes::router;
pub use store::Store;

/// Serves `store` on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, store: Arc<Store>) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}
