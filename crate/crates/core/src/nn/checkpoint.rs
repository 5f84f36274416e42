//! JSON checkpoints holding the model config, seed and parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nets::{DenoiserConfig, DenoiserNet, ScoreNet, ScoreNetConfig};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Score(ScoreNetConfig),
    Denoiser(DenoiserConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    /// Seed used for initialization.
    pub init_seed: u64,
    pub train: Option<TrainConfig>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_score(net: &ScoreNet, init_seed: u64, train: Option<TrainConfig>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: ModelConfig::Score(net.config.clone()),
            init_seed,
            train,
            params: net.params.clone(),
        }
    }

    pub fn from_denoiser(net: &DenoiserNet, init_seed: u64, train: Option<TrainConfig>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: ModelConfig::Denoiser(net.config.clone()),
            init_seed,
            train,
            params: net.params.clone(),
        }
    }

    pub fn score_net(&self) -> Result<ScoreNet> {
        match &self.model {
            ModelConfig::Score(cfg) => ScoreNet::with_params(cfg.clone(), self.params.clone()),
            ModelConfig::Denoiser(_) => Err(Error::Config(
                "expected a score checkpoint, found a denoiser".into(),
            )),
        }
    }

    pub fn denoiser(&self) -> Result<DenoiserNet> {
        match &self.model {
            ModelConfig::Denoiser(cfg) => DenoiserNet::with_params(cfg.clone(), self.params.clone()),
            ModelConfig::Score(_) => Err(Error::Config(
                "expected a denoiser checkpoint, found a score net".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::malformed(origin, e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::malformed(
                origin,
                format!("unsupported checkpoint version {}", ck.version),
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let net = ScoreNet::new(ScoreNetConfig::default(), 17).unwrap();
        let ck = Checkpoint::from_score(&net, 17, Some(TrainConfig::default()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("score.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.score_net().unwrap().params, net.params);
        assert!(matches!(back.denoiser(), Err(Error::Config(_))));
    }

    #[test]
    fn garbage_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"version\": 1}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Malformed { .. })));
    }
}
