//! From-scratch networks with hand-written backpropagation.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod train;

pub use checkpoint::{Checkpoint, ModelConfig};
pub use loss::{
    denoiser_loss, draw_perturbation, score_matching_loss, score_matching_value, snr_loss,
    LossWeighting, Pair,
};
pub use nets::{DenoiserConfig, DenoiserNet, ScoreNet, ScoreNetConfig, ScoreOutput, TimeEmbedding};
pub use train::{train, train_with, LossCurve, OptimizerKind, TrainConfig, Trainable};
