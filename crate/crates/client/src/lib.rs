//! Thin blocking client for the enhancement service.

use std::time::Duration;

use gse_core::api::{
    Chunk, ErrorBody, Health, PushRequest, PushResponse, StreamOpenRequest, StreamOpened,
    StreamSummary,
};
use gse_core::pipeline::{
    CostRequest, CostTable, EnhanceRequest, EnhanceResult, ForwardRequest, ForwardTable,
    SweepRequest, SweepTable, TrainRequest, TrainResult,
};
use reqwest::blocking::{Client as Http, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{kind}: {message}")]
    Service {
        status: u16,
        kind: String,
        message: String,
    },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    /// The service's error kind, or `"transport"`.
    pub fn kind(&self) -> &str {
        match self {
            ClientError::Service { kind, .. } => kind,
            ClientError::Transport(_) => "transport",
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: Http,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self> {
        let http = Http::builder()
            // training and sweeps can run for many minutes
            .timeout(Duration::from_secs(6 * 3600))
            .build()?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = req.send()?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let code = status.as_u16();
        match resp.json::<ErrorBody>() {
            Ok(body) => Err(ClientError::Service {
                status: code,
                kind: body.kind,
                message: body.message,
            }),
            Err(_) => Err(ClientError::Service {
                status: code,
                kind: "http".into(),
                message: format!("unexpected status {status}"),
            }),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(self.http.post(self.url(path)).json(body))
    }

    pub fn health(&self) -> Result<Health> {
        self.send(self.http.get(self.url("/health")))
    }

    pub fn simulate_forward(&self, req: &ForwardRequest) -> Result<ForwardTable> {
        self.post("/v1/simulate-forward", req)
    }

    pub fn train(&self, req: &TrainRequest) -> Result<TrainResult> {
        self.post("/v1/train", req)
    }

    pub fn enhance(&self, req: &EnhanceRequest) -> Result<EnhanceResult> {
        self.post("/v1/enhance", req)
    }

    pub fn sweep(&self, req: &SweepRequest) -> Result<SweepTable> {
        self.post("/v1/sweep", req)
    }

    pub fn cost(&self, req: &CostRequest) -> Result<CostTable> {
        self.post("/v1/cost", req)
    }

    pub fn open_stream(&self, req: &StreamOpenRequest) -> Result<StreamOpened> {
        self.post("/v1/streams", req)
    }

    pub fn push(&self, id: &str, samples: &[f64]) -> Result<PushResponse> {
        self.post(
            &format!("/v1/streams/{id}/push"),
            &PushRequest {
                samples: samples.to_vec(),
            },
        )
    }

    /// Next enhanced chunk, or `None` when nothing is ready.
    pub fn pull(&self, id: &str) -> Result<Option<Vec<f64>>> {
        let resp = self.http.get(self.url(&format!("/v1/streams/{id}/pull"))).send()?;
        if resp.status() == StatusCode::NO_CONTENT {
            return Ok(None);
        }
        if resp.status().is_success() {
            return Ok(Some(resp.json::<Chunk>()?.samples));
        }
        let code = resp.status().as_u16();
        let body: ErrorBody = resp.json()?;
        Err(ClientError::Service {
            status: code,
            kind: body.kind,
            message: body.message,
        })
    }

    pub fn finish(&self, id: &str) -> Result<PushResponse> {
        self.send(self.http.post(self.url(&format!("/v1/streams/{id}/finish"))))
    }

    pub fn close(&self, id: &str) -> Result<StreamSummary> {
        self.send(self.http.delete(self.url(&format!("/v1/streams/{id}"))))
    }
}
