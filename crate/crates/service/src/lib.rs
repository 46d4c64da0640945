//! HTTP/JSON scenario API.
//!
//! All routes live under `/v1`:
//!
//! | method | path | body / query | result |
//! |---|---|---|---|
//! | `GET`  | `/networks` | | stored networks |
//! | `POST` | `/networks` | `{"generate": {...}}` or `{"upload": <network document>}` | `{network_id, summary}` |
//! | `GET`  | `/networks/{id}` | `?format=json\|csv` | network document |
//! | `POST` | `/networks/{id}/shocks` | shock spec | `{scenario_id, summary, propagation, system_risk}` |
//! | `GET`  | `/scenarios/{id}` | | scenario overview |
//! | `GET`  | `/scenarios/{id}/metrics` | `?stage=FN_s&format=json\|csv` | risk matrix |
//! | `GET`  | `/scenarios/{id}/layout` | `?stage=&seed=&perplexity=&iterations=&format=json\|svg` | layout |
//! | `POST` | `/scenarios/{id}/layout` | `{stage, config}` | layout |
//! | `POST` | `/scenarios/{id}/interventions` | `{plan, base, overwrite}` | FN_i, FN_is summaries and assessment |
//! | `POST` | `/scenarios/{id}/compare` | `{plans, key, base}`, `?format=json\|csv` | ranked assessments or relief table |
//! | `GET`  | `/scenarios/{id}/strategies` | | candidate plans S0..S4 |
//! | `GET`  | `/scenarios/{id}/events` | | server-sent progress events |
//!
//! Errors are always `{code, message, detail}` with `code` one of `not_found`,
//! `invalid_input`, `infeasible`, `conflict` or `internal`.

pub mod api;
pub mod config;
pub mod error;
pub mod events;
pub mod extract;
pub mod store;

use axum::Router;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub use api::AppState;
pub use config::ServiceConfig;
pub use error::{ApiError, ApiResult, ErrorCode};
pub use store::Store;

pub fn router(state: AppState, static_dir: Option<&std::path::Path>) -> Router {
    let app = Router::new().nest("/v1", api::routes());
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(TraceLayer::new_for_http()).with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Run the service until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let store = Store::open(&config.store)?;
    let state = AppState::new(store, config.layout_defaults()?);
    let app = router(state, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %config.store.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
