use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono sample buffer at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal")]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

#[derive(Deserialize)]
struct RawSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl TryFrom<RawSignal> for Signal {
    type Error = Error;

    fn try_from(raw: RawSignal) -> Result<Self> {
        Signal::new(raw.samples, raw.sample_rate)
    }
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("signal must hold at least one sample".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Domain("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Current iterate of a reverse or forward pass.
#[derive(Debug, Clone)]
pub struct DiffusionState {
    pub x: Vec<f64>,
    pub t: f64,
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    energy(x).sqrt()
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nan() {
        assert!(Signal::new(vec![], 16000).is_err());
        assert!(Signal::new(vec![0.0, f64::NAN], 16000).is_err());
        assert!(Signal::new(vec![0.0], 0).is_err());
        let s = Signal::new(vec![0.0; 800], 16000).unwrap();
        assert!((s.duration_s() - 0.05).abs() < 1e-15);
    }
}
