use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use herodraft_core::api::ApiError;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    #[error("session {0} not found")]
    NotFound(u64),
    #[error("no such endpoint")]
    NoRoute,
    #[error("{0}")]
    WrongTurn(String),
    #[error("{0}")]
    Illegal(String),
    #[error("the draft is complete")]
    Terminal,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("request id {0} was already used for a different request")]
    RequestReused(u64),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) | ServiceError::NoRoute => "not_found",
            ServiceError::WrongTurn(_) => "wrong_turn",
            ServiceError::Illegal(_) => "illegal_pick",
            ServiceError::Terminal => "terminal",
            ServiceError::NothingToUndo => "nothing_to_undo",
            ServiceError::RequestReused(_) => "request_id_reused",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) | ServiceError::NoRoute => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        }
    }

    pub fn body(&self) -> ApiError {
        ApiError {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
