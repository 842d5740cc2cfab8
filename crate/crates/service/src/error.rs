use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use nnviz_core::Error;

/// Every error code the API can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    BadImage,
    ImageTooLarge,
    UnknownMethod,
    UnknownClass,
    InvalidConfig,
    CamInapplicable,
    UnknownJob,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 10] = [
        ErrorCode::BadRequest,
        ErrorCode::BadImage,
        ErrorCode::ImageTooLarge,
        ErrorCode::UnknownMethod,
        ErrorCode::UnknownClass,
        ErrorCode::InvalidConfig,
        ErrorCode::CamInapplicable,
        ErrorCode::UnknownJob,
        ErrorCode::NotFound,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest
            | ErrorCode::BadImage
            | ErrorCode::UnknownMethod
            | ErrorCode::UnknownClass
            | ErrorCode::InvalidConfig => StatusCode::BAD_REQUEST,
            ErrorCode::ImageTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::CamInapplicable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::UnknownJob | ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Maps an engine error; anything unexpected becomes an opaque 500.
    pub fn from_core(e: Error) -> Self {
        match e {
            Error::CamInapplicable { .. } => Self::new(ErrorCode::CamInapplicable, e.to_string()),
            Error::InvalidClass { .. } => Self::new(ErrorCode::UnknownClass, e.to_string()),
            Error::UnknownLayer(_) | Error::InvalidArgument(_) => Self::new(ErrorCode::BadRequest, e.to_string()),
            Error::Codec(_) | Error::InputShape { .. } => Self::new(ErrorCode::BadImage, e.to_string()),
            _ => Self::internal(),
        }
    }

    pub fn internal() -> Self {
        Self::new(ErrorCode::Internal, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
