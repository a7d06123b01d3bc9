//! Typed async client for the molgrow HTTP API.

use molgrow_api::{
    ApiError, EnumerateRequest, EnumerateResponse, Health, JobCreated, JobRequest, JobStatus,
    ParseRequest, ParseResponse, ProgressEvent, RoundtripRequest, RoundtripResponse, ScoreRequest,
    ScoreResponse,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach the server: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{}", .error.message)]
    Api { status: u16, error: ApiError },
    #[error("unexpected response ({status}): {body}")]
    Unexpected { status: u16, body: String },
}

impl ClientError {
    /// Exit code for a CLI reporting this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api { error, .. } => error.exit_code,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn read<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status().as_u16();
        let body = resp.text().await?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&body).map_err(|_| ClientError::Unexpected { status, body });
        }
        match serde_json::from_str::<ApiError>(&body) {
            Ok(error) => Err(ClientError::Api { status, error }),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::read(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        Self::read(self.http.get(format!("{}/health", self.base)).send().await?).await
    }

    pub async fn enumerate(&self, req: &EnumerateRequest) -> Result<EnumerateResponse, ClientError> {
        self.post("/v1/enumerate", req).await
    }

    pub async fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ClientError> {
        self.post("/v1/score", req).await
    }

    pub async fn roundtrip(&self, req: &RoundtripRequest) -> Result<RoundtripResponse, ClientError> {
        self.post("/v1/roundtrip", req).await
    }

    pub async fn parse(&self, req: &ParseRequest) -> Result<ParseResponse, ClientError> {
        self.post("/v1/parse", req).await
    }

    pub async fn submit(&self, req: &JobRequest) -> Result<u64, ClientError> {
        let created: JobCreated = self.post("/v1/jobs", req).await?;
        Ok(created.id)
    }

    pub async fn job(&self, id: u64, since: usize) -> Result<JobStatus, ClientError> {
        let url = format!("{}/v1/jobs/{id}?since={since}", self.base);
        Self::read(self.http.get(url).send().await?).await
    }

    pub async fn cancel(&self, id: u64) -> Result<(), ClientError> {
        let resp = self
            .http
            .delete(format!("{}/v1/jobs/{id}", self.base))
            .send()
            .await?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return Ok(());
        }
        let body = resp.text().await?;
        match serde_json::from_str::<ApiError>(&body) {
            Ok(error) => Err(ClientError::Api { status, error }),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    /// Polls until the job finishes, handing each new progress event to
    /// `on_event` in order. Returns the final status.
    pub async fn wait(
        &self,
        id: u64,
        poll: Duration,
        on_event: &mut (dyn FnMut(&ProgressEvent) + Send),
    ) -> Result<JobStatus, ClientError> {
        let mut since = 0;
        loop {
            let status = self.job(id, since).await?;
            for e in &status.events {
                on_event(e);
            }
            since = status.next;
            if status.state.is_finished() {
                return Ok(status);
            }
            tokio::time::sleep(poll).await;
        }
    }
}
