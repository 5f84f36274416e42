//! Optimizers and the training loop.

use serde::{Deserialize, Serialize};

use super::loss::{denoiser_loss, score_matching_loss, LossWeighting, Pair};
use super::nets::{DenoiserNet, ScoreNet};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::signal::all_finite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Rescale the gradient to this global norm when it is larger; 0 disables.
    pub clip_norm: f64,
    /// Cosine decay of the learning rate to zero over `steps`.
    pub cosine_decay: bool,
    pub weighting: LossWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            steps: 500,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            clip_norm: 1.0,
            cosine_decay: false,
            weighting: LossWeighting::OutputSpace,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be nonnegative".into()));
        }
        Ok(())
    }

    fn rate_at(&self, step: usize) -> f64 {
        if self.cosine_decay && self.steps > 0 {
            let frac = step as f64 / self.steps as f64;
            0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    SgdMomentum {
        momentum: f64,
        velocity: Vec<f64>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => Self::SgdMomentum {
                momentum: 0.9,
                velocity: vec![0.0; n_params],
            },
            OptimizerKind::Adam => Self::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self {
            Self::SgdMomentum { momentum, velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    *v = *momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            Self::Adam {
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// A model trainable on [`Pair`] batches.
pub trait Trainable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut Vec<f64>;
    /// Frame size the pair lengths must be a multiple of.
    fn frame_size(&self) -> usize;
    fn loss_and_grad(
        &self,
        batch: &[&Pair],
        rng: &mut RandomSource,
        cfg: &TrainConfig,
    ) -> Result<(f64, Vec<f64>)>;
}

impl Trainable for ScoreNet {
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }
    fn frame_size(&self) -> usize {
        self.config.frame_size
    }
    fn loss_and_grad(
        &self,
        batch: &[&Pair],
        rng: &mut RandomSource,
        cfg: &TrainConfig,
    ) -> Result<(f64, Vec<f64>)> {
        score_matching_loss(self, batch, rng, cfg.weighting)
    }
}

impl Trainable for DenoiserNet {
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }
    fn frame_size(&self) -> usize {
        self.config.frame_size
    }
    fn loss_and_grad(
        &self,
        batch: &[&Pair],
        _rng: &mut RandomSource,
        _cfg: &TrainConfig,
    ) -> Result<(f64, Vec<f64>)> {
        denoiser_loss(self, batch)
    }
}

/// Loss per optimizer step, recorded before the update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (k, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{k},{l:e}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mini-batch training with batches drawn uniformly with replacement.
pub fn train<M: Trainable>(model: &mut M, dataset: &[Pair], cfg: &TrainConfig) -> Result<LossCurve> {
    train_with(model, dataset, cfg, |_, _| {})
}

/// [`train`] with a per-step callback `(step, loss)`.
pub fn train_with<M: Trainable>(
    model: &mut M,
    dataset: &[Pair],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<LossCurve> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let fs = model.frame_size();
    if let Some(bad) = dataset
        .iter()
        .find(|p| p.clean.is_empty() || p.clean.len() % fs != 0)
    {
        return Err(Error::Dimension(format!(
            "training pair of length {} is not a positive multiple of frame size {fs}",
            bad.clean.len()
        )));
    }
    let mut rng = RandomSource::new(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, model.params().len());
    let mut curve = LossCurve::default();
    for step in 0..cfg.steps {
        let batch: Vec<&Pair> = (0..cfg.batch_size)
            .map(|_| &dataset[rng.index(dataset.len())])
            .collect();
        let (loss, mut grads) = model.loss_and_grad(&batch, &mut rng, cfg)?;
        if !loss.is_finite() || !all_finite(&grads) {
            return Err(Error::Numerical {
                step,
                message: format!("training diverged: loss = {loss}"),
            });
        }
        if cfg.clip_norm > 0.0 {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grads.iter_mut().for_each(|g| *g *= s);
            }
        }
        let lr = cfg.rate_at(step);
        if lr > 0.0 {
            opt.step(model.params_mut(), &grads, lr);
        }
        if !all_finite(model.params()) {
            return Err(Error::Numerical {
                step,
                message: "non-finite parameters after update".into(),
            });
        }
        curve.losses.push(loss);
        on_step(step, loss);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::nets::{DenoiserConfig, ScoreNetConfig};

    fn data(n: usize, len: usize) -> Vec<Pair> {
        let mut rng = RandomSource::new(5);
        (0..n)
            .map(|_| {
                let clean: Vec<f64> = (0..len).map(|i| (0.2 * i as f64).sin() * 0.5).collect();
                let noisy = clean.iter().map(|c| c + 0.1 * rng.normal()).collect();
                Pair { clean, noisy }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 5,
            batch_size: 2,
            ..Default::default()
        };
        let mut den = DenoiserNet::new(DenoiserConfig { frame_size: 8, hidden: 6 }, 1).unwrap();
        let before = den.params.clone();
        let one = data(1, 32);
        let curve = train(&mut den, &one, &cfg).unwrap();
        assert_eq!(den.params, before);
        assert!(curve.losses.windows(2).all(|w| w[0] == w[1]));

        let mut net = ScoreNet::new(
            ScoreNetConfig {
                frame_size: 8,
                hidden: 6,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let before = net.params.clone();
        train(&mut net, &one, &cfg).unwrap();
        assert_eq!(net.params, before);
    }

    #[test]
    fn fixed_seed_gives_identical_loss_curves() {
        let cfg = TrainConfig {
            steps: 10,
            batch_size: 3,
            seed: 9,
            ..Default::default()
        };
        let set = data(6, 32);
        let make = || {
            ScoreNet::new(
                ScoreNetConfig {
                    frame_size: 8,
                    hidden: 6,
                    ..Default::default()
                },
                4,
            )
            .unwrap()
        };
        let (mut a, mut b) = (make(), make());
        let ca = train(&mut a, &set, &cfg).unwrap();
        let cb = train(&mut b, &set, &cfg).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = vec![2.0 * p[0], 4.0 * p[1]];
            opt.step(&mut p, &g, 1e-2);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-3), "{p:?}");
        let mut sgd = Optimizer::new(OptimizerKind::SgdMomentum, 1);
        let mut q = vec![1.0];
        for _ in 0..500 {
            let g = vec![2.0 * q[0]];
            sgd.step(&mut q, &g, 1e-2);
        }
        assert!(q[0].abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_config_and_data() {
        let mut den = DenoiserNet::new(DenoiserConfig { frame_size: 8, hidden: 4 }, 1).unwrap();
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(matches!(train(&mut den, &data(1, 8), &bad), Err(Error::Config(_))));
        assert!(matches!(
            train(&mut den, &[], &TrainConfig::default()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            train(&mut den, &data(1, 12), &TrainConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn loss_csv_has_header_and_rows() {
        let c = LossCurve {
            losses: vec![1.5, 0.25],
        };
        assert_eq!(c.to_csv(), "step,loss\n0,1.5e0\n1,2.5e-1\n");
    }
}
