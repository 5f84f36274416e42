//! Training objectives with their gradients.

use serde::{Deserialize, Serialize};

use super::nets::{DenoiserNet, ScoreNet};
use crate::error::{check_same_len, Error, Result};
use crate::rng::RandomSource;
use crate::score::ScoreModel;
use crate::sde::{sample_perturbed, SdeParams};
use crate::signal::energy;

/// A clean/noisy training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

/// Per-item weighting of the denoising score-matching residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// `||s + z / sigma||^2`, unweighted and summed over samples.
    Literal,
    /// The same residual divided by the output scale squared and averaged
    /// over samples, so every `t` contributes on a comparable scale. The
    /// per-`t` minimizer is unchanged.
    #[default]
    OutputSpace,
}

/// Perturbation drawn for one item: time, noisy state and noise.
#[derive(Debug, Clone)]
pub struct Draw {
    pub t: f64,
    pub x_t: Vec<f64>,
    pub z: Vec<f64>,
}

/// `t ~ U[t_eps, T]`, then `(x_t, z)` from the perturbation kernel.
pub fn draw_perturbation(pair: &Pair, params: &SdeParams, rng: &mut RandomSource) -> Result<Draw> {
    let t = rng.uniform(params.t_eps, params.t_max);
    let (x_t, z) = sample_perturbed(&pair.clean, &pair.noisy, t, params, rng)?;
    Ok(Draw { t, x_t, z })
}

fn check_batch(batch: &[&Pair]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    for p in batch {
        check_same_len("training pair", p.clean.len(), p.noisy.len())?;
    }
    Ok(())
}

/// Batch mean of `||s(x_t, y, t) + z / sigma(t)||^2` for any score model,
/// evaluated from a zero state. Value only.
pub fn score_matching_value(
    model: &dyn ScoreModel,
    batch: &[&Pair],
    params: &SdeParams,
    rng: &mut RandomSource,
) -> Result<f64> {
    check_batch(batch)?;
    let state = vec![0.0; model.state_dim()];
    let mut total = 0.0;
    for pair in batch {
        let d = draw_perturbation(pair, params, rng)?;
        let sigma = params.sigma(d.t);
        let (s, _) = model.score(&d.x_t, &pair.noisy, d.t, &state)?;
        total += s
            .iter()
            .zip(&d.z)
            .map(|(si, zi)| (si + zi / sigma).powi(2))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Score-matching loss of a [`ScoreNet`] and its parameter gradient.
/// Perturbations use the network's own SDE parameters.
pub fn score_matching_loss(
    net: &ScoreNet,
    batch: &[&Pair],
    rng: &mut RandomSource,
    weighting: LossWeighting,
) -> Result<(f64, Vec<f64>)> {
    check_batch(batch)?;
    let params = net.config.sde;
    let h0 = vec![0.0; net.config.hidden];
    let mut grads = vec![0.0; net.n_params()];
    let mut total = 0.0;
    let inv_b = 1.0 / batch.len() as f64;
    let mut caches = Vec::new();
    for pair in batch {
        let d = draw_perturbation(pair, &params, rng)?;
        let sigma = params.sigma(d.t);
        caches.clear();
        let (s, _, sc) = net.forward_cached(&d.x_t, &pair.noisy, d.t, &h0, Some(&mut caches))?;
        let w = match weighting {
            LossWeighting::Literal => 1.0,
            LossWeighting::OutputSpace => 1.0 / (s.len() as f64 * sc.out * sc.out),
        };
        let mut d_raw = vec![0.0; s.len()];
        let mut item = 0.0;
        for ((dr, si), zi) in d_raw.iter_mut().zip(&s).zip(&d.z) {
            let e = si + zi / sigma;
            item += e * e;
            *dr = 2.0 * w * e * sc.out * inv_b;
        }
        total += w * item;
        net.core
            .backward(&net.params, &mut grads, &caches, &d_raw, None);
    }
    Ok((total * inv_b, grads))
}

/// Largest loss magnitude reported by [`snr_loss`].
pub const SNR_LOSS_FLOOR_DB: f64 = -120.0;
const SNR_EPS: f64 = 1e-12;

/// Negative SNR in dB, `-10 log10(||x0||^2 / (||x0 - x_hat||^2 + 1e-12))`,
/// floored at -120 dB.
pub fn snr_loss(x_hat: &[f64], x0: &[f64]) -> Result<f64> {
    Ok(snr_loss_grad(x_hat, x0)?.0)
}

/// [`snr_loss`] and its gradient with respect to `x_hat` (zero when floored).
pub fn snr_loss_grad(x_hat: &[f64], x0: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_same_len("snr loss", x_hat.len(), x0.len())?;
    let e0 = energy(x0);
    if e0 == 0.0 {
        return Err(Error::Domain("silent target in snr loss".into()));
    }
    let res: f64 = x0.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let value = -10.0 * (e0 / (res + SNR_EPS)).log10();
    if value <= SNR_LOSS_FLOOR_DB {
        return Ok((SNR_LOSS_FLOOR_DB, vec![0.0; x0.len()]));
    }
    let scale = 20.0 / (std::f64::consts::LN_10 * (res + SNR_EPS));
    let grad = x_hat.iter().zip(x0).map(|(h, a)| scale * (h - a)).collect();
    Ok((value, grad))
}

/// Batch mean SNR loss of a [`DenoiserNet`] from a zero state, with
/// the parameter gradient.
pub fn denoiser_loss(net: &DenoiserNet, batch: &[&Pair]) -> Result<(f64, Vec<f64>)> {
    check_batch(batch)?;
    let h0 = vec![0.0; net.config.hidden];
    let mut grads = vec![0.0; net.n_params()];
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut caches = Vec::new();
    for pair in batch {
        caches.clear();
        let (x_hat, _) = net.forward_cached(&pair.noisy, &h0, Some(&mut caches))?;
        let (value, mut g) = snr_loss_grad(&x_hat, &pair.clean)?;
        total += value;
        g.iter_mut().for_each(|v| *v *= inv_b);
        net.core.backward(&net.params, &mut grads, &caches, &g, None);
    }
    Ok((total * inv_b, grads))
}
