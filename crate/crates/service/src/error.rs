use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use previs_core::PrevisError;
use serde_json::json;

/// Error body `{"error": <code>, "message": <text>}` with a matching status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "invalid_request",
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }
}

impl From<PrevisError> for ApiError {
    fn from(e: PrevisError) -> Self {
        let (status, code) = match &e {
            PrevisError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            PrevisError::InvalidArgument(_)
            | PrevisError::DimensionMismatch { .. }
            | PrevisError::NonFinite(_)
            | PrevisError::Empty(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            PrevisError::MeshMismatch { .. } => (StatusCode::CONFLICT, "mesh_mismatch"),
            PrevisError::InvalidMesh(_) | PrevisError::IsolatedVertex(_) => (StatusCode::BAD_REQUEST, "invalid_mesh"),
            PrevisError::Divergence { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "divergence"),
            PrevisError::Integrity { .. } | PrevisError::Corrupt(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_artifact")
            }
            PrevisError::EigenNonConvergence { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "numerical_failure"),
            PrevisError::Io(_) | PrevisError::Json(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
