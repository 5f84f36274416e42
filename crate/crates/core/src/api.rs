//! Wire types for the streaming endpoints and error bodies.

use serde::{Deserialize, Serialize};

use crate::ledger::CostLedger;
use crate::nn::Checkpoint;
use crate::pipeline::Guidance;
use crate::sampler::SamplerConfig;
use crate::sde::SdeParams;
use crate::streaming::{LatencyReport, StreamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOpenRequest {
    pub score: Checkpoint,
    pub denoiser: Option<Checkpoint>,
    pub guidance: Guidance,
    pub stream: StreamConfig,
    pub sampler: SamplerConfig,
    pub sde: SdeParams,
    pub seed: u64,
    /// Input scale applied before enhancement and undone after.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOpened {
    pub id: String,
    pub chunk_size: usize,
    pub n_phi: usize,
    pub algorithmic_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushRequest {
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushResponse {
    /// Chunks enhanced by this push.
    pub produced: usize,
    pub pending_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub chunks: u64,
    pub bank_states: usize,
    pub ledger: CostLedger,
    pub latency: LatencyReport,
    pub realtime_factor: Option<f64>,
    /// Enhanced chunks that were never pulled.
    pub unpulled: Vec<Vec<f64>>,
}
