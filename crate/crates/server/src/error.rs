use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use molgrow_api::{ApiError, ErrorKind};
use molgrow_core::jobs::JobError;
use molgrow_core::objectives::ObjectiveError;

#[derive(Debug)]
pub struct AppError(pub ApiError);

impl AppError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        let exit_code = match kind {
            ErrorKind::BadRequest | ErrorKind::Config => 2,
            ErrorKind::Oracle => 3,
            ErrorKind::NotFound | ErrorKind::Internal => 1,
        };
        AppError(ApiError {
            kind,
            message: message.into(),
            exit_code,
        })
    }

    pub fn config(message: impl ToString) -> Self {
        AppError::new(ErrorKind::Config, message.to_string())
    }
}

impl From<ObjectiveError> for AppError {
    fn from(e: ObjectiveError) -> Self {
        if e.is_oracle() {
            AppError::new(ErrorKind::Oracle, e.to_string())
        } else {
            AppError::config(e)
        }
    }
}

impl From<&JobError> for AppError {
    fn from(e: &JobError) -> Self {
        let kind = match e.exit_code() {
            2 => ErrorKind::Config,
            3 => ErrorKind::Oracle,
            _ => ErrorKind::Internal,
        };
        AppError(ApiError {
            kind,
            message: e.to_string(),
            exit_code: e.exit_code(),
        })
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::BadRequest | ErrorKind::Config => StatusCode::BAD_REQUEST,
            ErrorKind::Oracle => StatusCode::BAD_GATEWAY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

/// Decodes a JSON body, reporting problems in the API's error shape.
pub fn decode<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, AppError> {
    serde_json::from_slice(body).map_err(|e| AppError::new(ErrorKind::BadRequest, e.to_string()))
}

pub async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AppError> + Send + 'static,
) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::new(ErrorKind::Internal, e.to_string()))?
}
