//! Score functions: the learned-model interface, the discriminative score
//! built from a one-shot denoiser estimate, the hybrid switch between them,
//! and a closed-form Gaussian oracle.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::ledger::CostLedger;
use crate::sde::{mean_into, SdeParams};

/// Recurrent state threaded between successive forwards of a model.
pub type HistoryState = Vec<f64>;

/// A (possibly stateful) estimate of `grad log p_t(x_t | y)`.
pub trait ScoreModel: Send + Sync {
    /// Length of the recurrent state; zero for stateless models.
    fn state_dim(&self) -> usize;

    /// Multiply-accumulates of one forward over `len` samples.
    fn macs_per_forward(&self, len: usize) -> u64;

    fn score(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        state: &[f64],
    ) -> Result<(Vec<f64>, HistoryState)>;
}

/// A one-shot discriminative enhancer `y -> x_D`.
pub trait DenoiserModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn macs_per_forward(&self, len: usize) -> u64;

    fn denoise(&self, y: &[f64], state: &[f64]) -> Result<(Vec<f64>, HistoryState)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Learned,
    Discriminative,
    Hybrid,
    AnalyticGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Discriminative,
    Learned,
}

/// Switch time `t_phi` and the number of grid steps above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSchedule {
    pub t_phi: f64,
    pub n_phi: usize,
}

impl GuidanceSchedule {
    pub fn from_t_phi(t_phi: f64, params: &SdeParams) -> Result<Self> {
        if !(0.0..=params.t_max).contains(&t_phi) {
            return Err(Error::Config(format!(
                "t_phi = {t_phi} outside [0, {}]",
                params.t_max
            )));
        }
        Ok(Self {
            t_phi,
            n_phi: n_phi_from_t_phi(t_phi, params),
        })
    }

    pub fn from_n_phi(n_phi: usize, params: &SdeParams) -> Result<Self> {
        if n_phi > params.n_steps {
            return Err(Error::Config(format!(
                "n_phi = {n_phi} exceeds N = {}",
                params.n_steps
            )));
        }
        Ok(Self {
            t_phi: t_phi_from_n_phi(n_phi, params),
            n_phi,
        })
    }

    /// Purely generative: the learned score at every step.
    pub fn generative(params: &SdeParams) -> Self {
        Self {
            t_phi: params.t_max,
            n_phi: 0,
        }
    }

    /// `t > t_phi` uses the discriminative score; the tie goes to the learned one.
    pub fn branch(&self, t: f64) -> Branch {
        if t > self.t_phi {
            Branch::Discriminative
        } else {
            Branch::Learned
        }
    }
}

/// `|{ n * dt : n * dt > t_phi, n = 1..N }|`.
///
/// Grid points within `1e-12 T` of `t_phi` count as equal to it, so a
/// `t_phi` rebuilt from a step count maps back to that count.
pub fn n_phi_from_t_phi(t_phi: f64, params: &SdeParams) -> usize {
    let tol = 1e-12 * params.t_max;
    (1..=params.n_steps)
        .filter(|&n| params.grid_time(n) > t_phi + tol)
        .count()
}

/// Grid time `T (1 - n_phi / N)`, the canonical switch time for `n_phi`
/// discriminative steps.
pub fn t_phi_from_n_phi(n_phi: usize, params: &SdeParams) -> f64 {
    params.grid_time(params.n_steps - n_phi.min(params.n_steps))
}

/// `(mean(x_D, y, t) - x_t) / sigma(t)^2`.
pub fn discriminative_score(
    x_t: &[f64],
    y: &[f64],
    t: f64,
    x_d: &[f64],
    params: &SdeParams,
) -> Result<Vec<f64>> {
    check_same_len("discriminative score (x_t, y)", x_t.len(), y.len())?;
    check_same_len("discriminative score (x_t, x_D)", x_t.len(), x_d.len())?;
    let var = params.variance(t)?;
    if var <= 0.0 {
        return Err(Error::Domain(format!("sigma(t)^2 = 0 at t = {t}")));
    }
    let mut out = vec![0.0; x_t.len()];
    mean_into(x_d, y, params.decay(t), &mut out);
    for (o, x) in out.iter_mut().zip(x_t) {
        *o = (*o - x) / var;
    }
    Ok(out)
}

/// Isotropic Gaussian clean-signal prior `N(m0, var0 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior0 {
    pub m0: Vec<f64>,
    pub var0: f64,
}

impl GaussianPrior0 {
    pub fn new(m0: Vec<f64>, var0: f64) -> Result<Self> {
        if !(var0 > 0.0 && var0.is_finite()) {
            return Err(Error::Domain(format!("var0 must be positive, got {var0}")));
        }
        Ok(Self { m0, var0 })
    }

    /// Variance of the marginal `p_t(x_t | y)`.
    pub fn marginal_variance(&self, t: f64, params: &SdeParams) -> f64 {
        let d = params.decay(t);
        d * d * self.var0 + params.var(t)
    }
}

/// Closed-form marginal score when the clean signal is `N(m0, var0 I)`.
pub fn analytic_gaussian_score(
    x_t: &[f64],
    y: &[f64],
    t: f64,
    prior: &GaussianPrior0,
    params: &SdeParams,
) -> Result<Vec<f64>> {
    check_same_len("analytic score (x_t, y)", x_t.len(), y.len())?;
    check_same_len("analytic score (x_t, m0)", x_t.len(), prior.m0.len())?;
    if !(0.0..=params.t_max).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, T]")));
    }
    let v = prior.marginal_variance(t, params);
    let mut out = vec![0.0; x_t.len()];
    mean_into(&prior.m0, y, params.decay(t), &mut out);
    for (o, x) in out.iter_mut().zip(x_t) {
        *o = (*o - x) / v;
    }
    Ok(out)
}

/// The Gaussian oracle as a [`ScoreModel`] with zero cost.
#[derive(Debug, Clone)]
pub struct AnalyticScore {
    pub prior: GaussianPrior0,
    pub params: SdeParams,
}

impl ScoreModel for AnalyticScore {
    fn state_dim(&self) -> usize {
        0
    }

    fn macs_per_forward(&self, _len: usize) -> u64 {
        0
    }

    fn score(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        _state: &[f64],
    ) -> Result<(Vec<f64>, HistoryState)> {
        Ok((
            analytic_gaussian_score(x_t, y, t, &self.prior, &self.params)?,
            Vec::new(),
        ))
    }
}

/// Switches between the discriminative score (above `t_phi`) and a learned
/// model (at or below it), counting each evaluation in a ledger.
pub struct HybridScore<'a> {
    pub learned: &'a dyn ScoreModel,
    pub x_d: Option<&'a [f64]>,
    pub schedule: GuidanceSchedule,
    pub params: SdeParams,
}

impl HybridScore<'_> {
    /// Returns the score and, for the learned branch, the model's next state.
    pub fn evaluate(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        state: &[f64],
        ledger: &mut CostLedger,
    ) -> Result<(Vec<f64>, Option<HistoryState>)> {
        match self.schedule.branch(t) {
            Branch::Discriminative => {
                let x_d = self.x_d.ok_or_else(|| {
                    Error::Config("discriminative branch requested without x_D".into())
                })?;
                ledger.discriminative_evals += 1;
                Ok((discriminative_score(x_t, y, t, x_d, &self.params)?, None))
            }
            Branch::Learned => {
                let (s, next) = self.learned.score(x_t, y, t, state)?;
                ledger.record_score_forward(self.learned.macs_per_forward(x_t.len()));
                Ok((s, Some(next)))
            }
        }
    }
}
