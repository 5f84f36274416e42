//! Diffusion-based speech enhancement with discriminative guidance and
//! chunk-level streaming.

pub mod api;
pub mod audio;
pub mod error;
pub mod ledger;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod signal;
pub mod streaming;

pub use error::{Error, Result};
pub use ledger::CostLedger;
pub use rng::RandomSource;
pub use sampler::{reverse_process, Guide, SamplerConfig};
pub use score::{GuidanceSchedule, ScoreModel, DenoiserModel, HistoryState};
pub use sde::SdeParams;
pub use signal::{DiffusionState, Signal};
