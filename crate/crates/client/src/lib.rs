//! Thin HTTP client for the segmentation service.

use std::time::Duration;

use echoseg_core::api::{
    BaselineRequest, BaselineResponse, ErrorBody, EvaluateRequest, Health, InferRequest, InferResponse, JobState,
    JobStatus, ModelInfo, ScheduleRequest, ScheduleResponse, SynthRequest, SynthResponse, TrainRequest,
};
use echoseg_core::metrics::MetricsReport;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: u16, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    async fn decode<T: DeserializeOwned>(res: reqwest::Response) -> Result<T> {
        let status = res.status();
        if status.is_success() {
            return Ok(res.json().await?);
        }
        let text = res.text().await?;
        let message = serde_json::from_str::<ErrorBody>(&text).map_or(text, |b| b.error);
        Err(ClientError::Api { status: status.as_u16(), message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn model(&self) -> Result<ModelInfo> {
        self.get("/v1/model").await
    }

    pub async fn infer(&self, req: &InferRequest) -> Result<InferResponse> {
        self.post("/v1/infer", req).await
    }

    pub async fn baseline(&self, req: &BaselineRequest) -> Result<BaselineResponse> {
        self.post("/v1/baseline", req).await
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<MetricsReport> {
        self.post("/v1/evaluate", req).await
    }

    pub async fn synth(&self, req: &SynthRequest) -> Result<SynthResponse> {
        self.post("/v1/synth", req).await
    }

    pub async fn schedule(&self, req: &ScheduleRequest) -> Result<ScheduleResponse> {
        self.post("/v1/schedule", req).await
    }

    pub async fn train(&self, req: &TrainRequest) -> Result<JobStatus> {
        self.post("/v1/train", req).await
    }

    pub async fn job(&self, id: u64) -> Result<JobStatus> {
        self.get(&format!("/v1/jobs/{id}")).await
    }

    /// Polls a job until it leaves the running state.
    pub async fn wait_job(&self, id: u64, poll: Duration) -> Result<JobStatus> {
        loop {
            let status = self.job(id).await?;
            if status.state != JobState::Running {
                return Ok(status);
            }
            tokio::time::sleep(poll).await;
        }
    }
}
