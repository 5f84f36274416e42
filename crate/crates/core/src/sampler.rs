//! Predictor-corrector sampling of the reverse-time SDE.
//!
//! Step `n = N..1` sits at grid time `t_n = n T / N`. Each step first runs
//! the annealed Langevin corrector(s) at `t_n`, then the reverse-diffusion
//! predictor from `t_n` to `t_{n-1}`. Both use the score branch chosen by
//! the guidance schedule at `t_n`.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::ledger::CostLedger;
use crate::rng::RandomSource;
use crate::score::{
    Branch, DenoiserModel, GuidanceSchedule, HistoryState, HybridScore, ScoreModel,
};
use crate::sde::SdeParams;
use crate::signal::{all_finite, norm, DiffusionState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub corrector_steps: usize,
    /// Target signal-to-noise ratio `r` of the Langevin corrector.
    pub corrector_snr: f64,
    pub seed: u64,
    /// Drop the noise term of the final predictor step.
    pub denoise_final: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            corrector_steps: 1,
            corrector_snr: 0.5,
            seed: 0,
            denoise_final: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.corrector_snr > 0.0 && self.corrector_snr.is_finite()) {
            return Err(Error::Config("corrector_snr must be positive".into()));
        }
        Ok(())
    }
}

/// Source of the one-shot estimate `x_D` for the discriminative score.
#[derive(Clone, Copy)]
pub enum Guide<'a> {
    None,
    Denoiser(&'a dyn DenoiserModel),
    Estimate(&'a [f64]),
}

/// One reverse-diffusion step from `t` to `t - dt` with noise `z`:
/// `x + [-f(x, y) + g(t)^2 s] dt + g(t) sqrt(dt) z`.
pub fn predictor_update(
    state: &DiffusionState,
    y: &[f64],
    score: &[f64],
    z: &[f64],
    params: &SdeParams,
    dt: f64,
) -> Result<DiffusionState> {
    check_same_len("predictor (x, y)", state.x.len(), y.len())?;
    check_same_len("predictor (x, score)", state.x.len(), score.len())?;
    check_same_len("predictor (x, z)", state.x.len(), z.len())?;
    let t_next = state.t - dt;
    if t_next < -1e-12 * params.t_max {
        return Err(Error::Domain(format!(
            "predictor step would leave [0, T]: t = {}, dt = {dt}",
            state.t
        )));
    }
    let g = params.g(state.t);
    let g2dt = g * g * dt;
    let noise = g * dt.sqrt();
    let x = state
        .x
        .iter()
        .zip(y)
        .zip(score.iter().zip(z))
        .map(|((xi, yi), (si, zi))| xi - params.gamma * (yi - xi) * dt + g2dt * si + noise * zi)
        .collect();
    Ok(DiffusionState {
        x,
        t: t_next.max(0.0),
    })
}

/// [`predictor_update`] drawing `z` from `rng`.
pub fn predictor_step(
    state: &DiffusionState,
    y: &[f64],
    score: &[f64],
    params: &SdeParams,
    dt: f64,
    rng: &mut RandomSource,
) -> Result<DiffusionState> {
    let z = rng.normal_vec(state.x.len());
    predictor_update(state, y, score, &z, params, dt)
}

/// Annealed Langevin update `x + eps s + sqrt(2 eps) z` with
/// `eps = 2 (r |z| / |s|)^2`. Returns `false` (and leaves `x` alone) when
/// the score vanishes.
pub fn corrector_update(x: &mut [f64], score: &[f64], z: &[f64], snr: f64) -> Result<bool> {
    check_same_len("corrector (x, score)", x.len(), score.len())?;
    check_same_len("corrector (x, z)", x.len(), z.len())?;
    let s_norm = norm(score);
    if s_norm == 0.0 {
        return Ok(false);
    }
    let ratio = snr * norm(z) / s_norm;
    let eps = 2.0 * ratio * ratio;
    let amp = (2.0 * eps).sqrt();
    for ((xi, si), zi) in x.iter_mut().zip(score).zip(z) {
        *xi += eps * si + amp * zi;
    }
    Ok(true)
}

/// One corrector step at fixed time; the score is recomputed at the
/// current iterate by `score_at`.
pub fn corrector_step(
    state: &DiffusionState,
    snr: f64,
    rng: &mut RandomSource,
    ledger: &mut CostLedger,
    mut score_at: impl FnMut(&[f64], f64, &mut CostLedger) -> Result<Vec<f64>>,
) -> Result<DiffusionState> {
    let s = score_at(&state.x, state.t, ledger)?;
    let z = rng.normal_vec(state.x.len());
    let mut x = state.x.clone();
    ledger.corrector_steps += 1;
    if !corrector_update(&mut x, &s, &z, snr)? {
        ledger.corrector_skips += 1;
    }
    Ok(DiffusionState { x, t: state.t })
}

/// Full reverse pass over one chunk, reading and writing per-step states in
/// `bank` (one entry per step, index `n - 1`). The learned model's state at
/// step `n` is read by every evaluation of that step and written only by
/// the predictor's.
#[allow(clippy::too_many_arguments)]
pub(crate) fn reverse_chunk(
    y: &[f64],
    learned: &dyn ScoreModel,
    x_d: Option<&[f64]>,
    schedule: GuidanceSchedule,
    cfg: &SamplerConfig,
    params: &SdeParams,
    rng: &mut RandomSource,
    bank: &mut [HistoryState],
    ledger: &mut CostLedger,
) -> Result<Vec<f64>> {
    let n_steps = params.n_steps;
    if bank.len() != n_steps {
        return Err(Error::Config(format!(
            "history bank holds {} states, sampler needs {n_steps}",
            bank.len()
        )));
    }
    if schedule.n_phi > 0 && x_d.is_none() {
        return Err(Error::Config(
            "n_phi > 0 needs a discriminative estimate x_D".into(),
        ));
    }
    let hybrid = HybridScore {
        learned,
        x_d,
        schedule,
        params: *params,
    };
    let dt = params.dt();
    let sigma_t = params.sigma(params.t_max);
    let mut x = rng.normal_vec(y.len());
    for (xi, yi) in x.iter_mut().zip(y) {
        *xi = yi + sigma_t * *xi;
    }
    let mut state = DiffusionState {
        x,
        t: params.t_max,
    };

    for n in (1..=n_steps).rev() {
        let t = params.grid_time(n);
        state.t = t;
        let step_state = bank[n - 1].clone();
        for _ in 0..cfg.corrector_steps {
            state = corrector_step(&state, cfg.corrector_snr, rng, ledger, |x, t, ledger| {
                hybrid.evaluate(x, y, t, &step_state, ledger).map(|(s, _)| s)
            })?;
        }
        let (score, next) = hybrid.evaluate(&state.x, y, t, &step_state, ledger)?;
        match schedule.branch(t) {
            Branch::Discriminative => ledger.discriminative_steps += 1,
            Branch::Learned => ledger.learned_steps += 1,
        }
        if let Some(next) = next {
            bank[n - 1] = next;
        }
        let mut z = rng.normal_vec(y.len());
        if n == 1 && cfg.denoise_final {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        state = predictor_update(&state, y, &score, &z, params, dt)?;
        if !all_finite(&state.x) {
            return Err(Error::Numerical {
                step: n_steps - n + 1,
                message: format!("non-finite iterate after predictor at t = {t}"),
            });
        }
    }
    Ok(state.x)
}

/// Offline enhancement of `y`: prior draw `N(y, sigma(T)^2 I)`, then `N`
/// predictor-corrector steps down to `t = 0`. The denoiser (if any) runs once,
/// and only when the schedule has discriminative steps.
pub fn reverse_process(
    y: &[f64],
    learned: &dyn ScoreModel,
    guide: Guide<'_>,
    schedule: GuidanceSchedule,
    cfg: &SamplerConfig,
    params: &SdeParams,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, CostLedger)> {
    params.validate()?;
    cfg.validate()?;
    if y.is_empty() || !all_finite(y) {
        return Err(Error::Domain("input must be nonempty and finite".into()));
    }
    let mut ledger = CostLedger::default();
    let x_d = resolve_guide(guide, y, schedule, &mut ledger)?;
    let mut bank = vec![vec![0.0; learned.state_dim()]; params.n_steps];
    let x = reverse_chunk(
        y,
        learned,
        x_d.as_deref(),
        schedule,
        cfg,
        params,
        rng,
        &mut bank,
        &mut ledger,
    )?;
    Ok((x, ledger))
}

fn resolve_guide(
    guide: Guide<'_>,
    y: &[f64],
    schedule: GuidanceSchedule,
    ledger: &mut CostLedger,
) -> Result<Option<Vec<f64>>> {
    if schedule.n_phi == 0 {
        return Ok(None);
    }
    match guide {
        Guide::None => Err(Error::Config(
            "n_phi > 0 needs a denoiser or an x_D estimate".into(),
        )),
        Guide::Estimate(x_d) => {
            check_same_len("x_D", x_d.len(), y.len())?;
            Ok(Some(x_d.to_vec()))
        }
        Guide::Denoiser(d) => {
            let (x_d, _) = d.denoise(y, &vec![0.0; d.state_dim()])?;
            ledger.record_denoiser_forward(d.macs_per_forward(y.len()));
            Ok(Some(x_d))
        }
    }
}
