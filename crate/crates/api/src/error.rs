use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use panelwise_core::store::StoreError;
use panelwise_core::EngineError;
use serde_json::{json, Value};

/// An error response: status plus a JSON body with at least `error`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
            StoreError::Duplicate { .. } | StoreError::HistoryRewrite(_) => StatusCode::CONFLICT,
            StoreError::InvalidId(_) | StoreError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Corrupt { .. } | StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NotFound(m) => Self::new(StatusCode::NOT_FOUND, m),
            EngineError::Protocol {
                phase,
                ref got,
                ref expected,
            } => Self {
                status: StatusCode::CONFLICT,
                body: json!({
                    "error": e.to_string(),
                    "phase": phase,
                    "got": got,
                    "expected": expected,
                }),
            },
            EngineError::InvalidInput(m) => Self::unprocessable(m),
            EngineError::IllegalState(m) => Self::new(StatusCode::CONFLICT, format!("illegal state: {m}")),
            EngineError::Stage { message, notice } => Self {
                status: StatusCode::BAD_GATEWAY,
                body: json!({ "error": message, "notice": notice }),
            },
            EngineError::Store(s) => s.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
