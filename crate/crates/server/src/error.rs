use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use dig_core::binding::{BindError, ParseError};
use dig_core::interface::SynthError;
use dig_core::tooling::{InteractionError, TutorialError};
use dig_core::{BackendError, Finding, ModelError, ParseGrammarError};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown grammar `{0}`")]
    UnknownGrammar(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("unknown starting rule `{0}`")]
    UnknownRoot(String),
    #[error("continuation token `{0}` is stale or malformed")]
    StaleToken(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    GrammarSyntax(#[from] ParseGrammarError),
    #[error("grammar is not well-formed")]
    InvalidGrammar(Vec<Finding>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{message}")]
    Domain { message: String },
    #[error("input does not parse at byte {}", .0.position)]
    Parse(ParseError),
    #[error(transparent)]
    Tutorial(#[from] TutorialError),
    #[error("{0}")]
    Backend(BackendError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownGrammar(_) => "unknown_grammar",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownInteraction(_) => "unknown_interaction",
            ApiError::UnknownRoot(_) => "unknown_root",
            ApiError::StaleToken(_) => "stale_token",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::GrammarSyntax(_) => "grammar_syntax",
            ApiError::InvalidGrammar(_) => "invalid_grammar",
            ApiError::Model(_) => "model",
            ApiError::Domain { .. } => "domain",
            ApiError::Parse(_) => "parse",
            ApiError::Tutorial(_) => "tutorial",
            ApiError::Backend(BackendError::Unavailable) => "backend_unavailable",
            ApiError::Backend(_) => "backend",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownGrammar(_)
            | ApiError::UnknownSession(_)
            | ApiError::UnknownInteraction(_)
            | ApiError::UnknownRoot(_) => StatusCode::NOT_FOUND,
            ApiError::StaleToken(_) => StatusCode::GONE,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::GrammarSyntax(_)
            | ApiError::InvalidGrammar(_)
            | ApiError::Model(_)
            | ApiError::Domain { .. }
            | ApiError::Parse(_)
            | ApiError::Tutorial(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Backend(BackendError::Unavailable) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Backend(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<BindError> for ApiError {
    fn from(e: BindError) -> Self {
        match e {
            BindError::Model(m) => ApiError::Model(m),
            BindError::Parse(p) => ApiError::Parse(p),
            BindError::BackendUnavailable => ApiError::Backend(BackendError::Unavailable),
            BindError::Backend(b) => ApiError::Backend(b),
            e @ (BindError::Domain(_) | BindError::UnboundParameter { .. }) => ApiError::Domain { message: e.to_string() },
        }
    }
}

impl From<InteractionError> for ApiError {
    fn from(e: InteractionError) -> Self {
        match e {
            InteractionError::UnknownInteraction(id) => ApiError::UnknownInteraction(id),
            e @ InteractionError::BadPayload { .. } => ApiError::BadRequest(e.to_string()),
            InteractionError::Bind(b) => b.into(),
        }
    }
}

impl From<SynthError> for ApiError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Model(m) => ApiError::Model(m),
            SynthError::BackendUnavailable(_) => ApiError::Backend(BackendError::Unavailable),
            SynthError::Backend(b) => ApiError::Backend(b),
            e @ SynthError::Unroll(_) => ApiError::BadRequest(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code(), "message": self.to_string()});
        match &self {
            ApiError::Parse(p) => {
                body["position"] = json!(p.position);
                body["expected"] = json!(p.expected);
            }
            ApiError::InvalidGrammar(findings) => {
                body["findings"] = json!(findings.iter().map(ToString::to_string).collect::<Vec<_>>());
            }
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}
