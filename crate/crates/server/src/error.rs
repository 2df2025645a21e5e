use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error body `{code, message, seq?}`. `seq` is the record that logged the
/// failure, when there is one.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl ApiError {
    pub fn argument(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "ArgumentError".into(),
            message: message.into(),
            seq: None,
        }
    }

    pub fn from_core(e: &gatescope_core::Error, seq: Option<u64>) -> Self {
        let status = match e.code() {
            "UnknownGate" | "UnknownSubmodule" => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            code: e.code().to_string(),
            message: e.to_string(),
            seq,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}
