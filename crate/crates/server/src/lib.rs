//! HTTP service over data interface grammars: load grammars, open sessions
//! on synthesized interfaces, apply interactions and return the queries they
//! trigger along with their results.

mod error;
mod results;
mod routes;
mod session;

pub use error::ApiError;
pub use results::{RootResult, RootStatus, DEFAULT_ROW_CAP};
pub use routes::router;
pub use session::{AppState, LoadedGrammar, Recursion, Session, SessionOptions, SynthMode};

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
