use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown probe `{0}`")]
    UnknownProbe(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown sample `{0}`")]
    UnknownSample(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("round token `{0}` is not current")]
    StaleToken(String),
    #[error("`{0}` is not among this round's suggestions")]
    NotSuggested(String),
    #[error("session is finished")]
    Finished,
    #[error("internal error: {0}")]
    Internal(String),
}

/// Error payload of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::UnknownDataset(_) => "unknown_dataset",
            ApiError::UnknownProbe(_) => "unknown_probe",
            ApiError::UnknownSession(_) => "unknown_session",
            ApiError::UnknownSample(_) => "unknown_sample",
            ApiError::InvalidParams(_) => "invalid_params",
            ApiError::StaleToken(_) => "stale_token",
            ApiError::NotSuggested(_) => "not_suggested",
            ApiError::Finished => "session_finished",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownDataset(_)
            | ApiError::UnknownProbe(_)
            | ApiError::UnknownSession(_)
            | ApiError::UnknownSample(_) => StatusCode::NOT_FOUND,
            ApiError::InvalidParams(_) | ApiError::NotSuggested(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::StaleToken(_) | ApiError::Finished => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(msg) = &self {
            log::error!("{msg}");
        }
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
