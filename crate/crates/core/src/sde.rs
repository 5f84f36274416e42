//! Closed-form quantities of the forward process
//! `dx = gamma (y - x) dt + g(t) dw`
//! and the Euler-Maruyama simulator used to check them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::rng::RandomSource;

/// Diffusion schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeParams {
    pub gamma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub t_eps: f64,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            sigma_min: 1e-4,
            sigma_max: 1e-1,
            t_max: 1.0,
            n_steps: 30,
            t_eps: 0.03,
        }
    }
}

impl SdeParams {
    /// `sigma_max == sigma_min` is accepted: it switches the noise off and
    /// leaves the deterministic relaxation toward `y`.
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        ok(self.gamma.is_finite() && self.gamma > 0.0, "gamma must be positive")?;
        ok(
            self.sigma_min.is_finite() && self.sigma_min > 0.0,
            "sigma_min must be positive",
        )?;
        ok(
            self.sigma_max.is_finite() && self.sigma_max >= self.sigma_min,
            "sigma_max must be >= sigma_min",
        )?;
        ok(
            self.t_max.is_finite() && self.t_eps > 0.0 && self.t_max > self.t_eps,
            "need T > t_eps > 0",
        )?;
        ok(self.n_steps >= 1, "N must be at least 1")
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        self.n_steps = n;
        self
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    /// Time of discrete step `n` on the grid `n * T / N`.
    pub fn grid_time(&self, n: usize) -> f64 {
        self.t_max * n as f64 / self.n_steps as f64
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.t_max
            )));
        }
        Ok(())
    }

    /// `g(t) = sigma_min (sigma_max/sigma_min)^t sqrt(2 ln(sigma_max/sigma_min))`.
    pub fn diffusion_coeff(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.g(t))
    }

    pub(crate) fn g(&self, t: f64) -> f64 {
        let lr = self.log_ratio();
        self.sigma_min * (t * lr).exp() * (2.0 * lr).sqrt()
    }

    /// Perturbation-kernel variance `sigma(t)^2`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.var(t))
    }

    pub(crate) fn var(&self, t: f64) -> f64 {
        let lr = self.log_ratio();
        // r^{2t} - e^{-2 gamma t} = e^{-2 gamma t} * expm1(2t (ln r + gamma))
        let diff = (-2.0 * self.gamma * t).exp() * (2.0 * t * (lr + self.gamma)).exp_m1();
        self.sigma_min * self.sigma_min * diff * lr / (self.gamma + lr)
    }

    pub(crate) fn sigma(&self, t: f64) -> f64 {
        self.var(t).sqrt()
    }

    /// Weight `e^{-gamma t}` on the clean signal in the kernel mean.
    pub(crate) fn decay(&self, t: f64) -> f64 {
        (-self.gamma * t).exp()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: SdeParams =
            toml::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `gamma (y - x)` elementwise.
pub fn drift(x: &[f64], y: &[f64], params: &SdeParams) -> Result<Vec<f64>> {
    check_same_len("drift", x.len(), y.len())?;
    Ok(x.iter()
        .zip(y)
        .map(|(xi, yi)| params.gamma * (yi - xi))
        .collect())
}

/// Kernel mean `e^{-gamma t} x0 + (1 - e^{-gamma t}) y`.
pub fn mean(x0: &[f64], y: &[f64], t: f64, params: &SdeParams) -> Result<Vec<f64>> {
    check_same_len("mean", x0.len(), y.len())?;
    params.check_time(t)?;
    let mut out = vec![0.0; x0.len()];
    mean_into(x0, y, params.decay(t), &mut out);
    Ok(out)
}

pub(crate) fn mean_into(x0: &[f64], y: &[f64], decay: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x0).zip(y) {
        *o = decay * a + (1.0 - decay) * b;
    }
}

/// Draw `x_t = mean(x0, y, t) + sigma(t) z`; returns `(x_t, z)`.
pub fn sample_perturbed(
    x0: &[f64],
    y: &[f64],
    t: f64,
    params: &SdeParams,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = rng.normal_vec(x0.len());
    perturb_with(x0, y, t, params, z)
}

/// Same as [`sample_perturbed`] with a caller-supplied `z`.
pub fn perturb_with(
    x0: &[f64],
    y: &[f64],
    t: f64,
    params: &SdeParams,
    z: Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_same_len("perturb", x0.len(), y.len())?;
    check_same_len("perturb noise", x0.len(), z.len())?;
    if t < params.t_eps || t > params.t_max {
        return Err(Error::Domain(format!(
            "t = {t} outside [t_eps, T] = [{}, {}]",
            params.t_eps, params.t_max
        )));
    }
    let mut xt = mean(x0, y, t, params)?;
    let sigma = params.sigma(t);
    for (v, zi) in xt.iter_mut().zip(&z) {
        *v += sigma * zi;
    }
    Ok((xt, z))
}

/// Simulate the forward SDE on a uniform grid of `steps` intervals over
/// `[0, T]`, calling `observe(k, t_k, x_k)` for every grid point including
/// both ends.
pub fn euler_maruyama(
    x0: &[f64],
    y: &[f64],
    params: &SdeParams,
    steps: usize,
    rng: &mut RandomSource,
    mut observe: impl FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>> {
    check_same_len("euler_maruyama", x0.len(), y.len())?;
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let dt = params.t_max / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut x = x0.to_vec();
    observe(0, 0.0, &x);
    for k in 0..steps {
        let t = params.t_max * k as f64 / steps as f64;
        let g = params.g(t);
        for (xi, yi) in x.iter_mut().zip(y) {
            let dw = sqrt_dt * rng.normal();
            *xi += params.gamma * (yi - *xi) * dt + g * dw;
        }
        observe(k + 1, params.t_max * (k + 1) as f64 / steps as f64, &x);
    }
    Ok(x)
}

/// Forward simulation returning `x_T`. Requires `steps >= 100`.
pub fn euler_maruyama_forward(
    x0: &[f64],
    y: &[f64],
    params: &SdeParams,
    steps: usize,
    rng: &mut RandomSource,
) -> Result<Vec<f64>> {
    if steps < 100 {
        return Err(Error::Domain(format!(
            "euler_maruyama_forward needs >= 100 steps, got {steps}"
        )));
    }
    euler_maruyama(x0, y, params, steps, rng, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> SdeParams {
        SdeParams::default()
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift(&[0.3, -1.0], &[0.3, -1.0], &p()).unwrap(), vec![0.0, 0.0]);
        assert_eq!(drift(&[0.0], &[1.0], &p()).unwrap(), vec![1.5]);
        let half = SdeParams { gamma: 0.5, ..p() };
        assert_eq!(drift(&[2.0, 0.0], &[0.0, 2.0], &half).unwrap(), vec![-1.0, 1.0]);
        assert!(matches!(drift(&[0.0], &[1.0, 2.0], &p()), Err(Error::Dimension(_))));
    }

    #[test]
    fn diffusion_coeff_examples() {
        let k = (2.0 * 1000f64.ln()).sqrt();
        assert!((p().diffusion_coeff(0.0).unwrap() - 1e-4 * k).abs() < 1e-15);
        assert!((p().diffusion_coeff(0.0).unwrap() - 3.717e-4).abs() < 1e-7);
        assert!((p().diffusion_coeff(1.0).unwrap() - 1e-1 * k).abs() < 1e-13);
        assert!((p().diffusion_coeff(1.0).unwrap() - 0.3717).abs() < 1e-4);
        let flat = SdeParams { sigma_max: 1e-4, ..p() };
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(flat.diffusion_coeff(t).unwrap(), 0.0);
        }
        assert!(matches!(p().diffusion_coeff(1.5), Err(Error::Domain(_))));
        assert!(matches!(p().diffusion_coeff(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_examples() {
        let x0 = [0.7, -0.2];
        let y = [0.1, 0.4];
        assert_eq!(mean(&x0, &y, 0.0, &p()).unwrap(), x0.to_vec());
        let m = mean(&y, &y, 0.6, &p()).unwrap();
        for (a, b) in m.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
        let m = mean(&[1.0], &[0.0], 1.0, &p()).unwrap();
        assert!((m[0] - (-1.5f64).exp()).abs() < 1e-15);
        assert!((m[0] - 0.22313).abs() < 1e-5);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(p().variance(0.0).unwrap(), 0.0);
        // independent evaluation of the closed form without expm1
        let lr = 1000f64.ln();
        let direct = 1e-8 * (1000f64.powf(2.0) - (-3.0f64).exp()) * lr / (1.5 + lr);
        let v = p().variance(1.0).unwrap();
        assert!((v - direct).abs() / direct < 1e-12);
        assert!((v - 8.215e-3).abs() < 1e-6);
        assert!((v.sqrt() - 0.0906).abs() < 1e-4);
        let flat = SdeParams { sigma_max: 1e-4, ..p() };
        assert_eq!(flat.variance(0.4).unwrap(), 0.0);
    }

    #[test]
    fn perturbed_with_zero_noise_is_mean() {
        let x0 = [0.5, -0.5, 0.25];
        let y = [0.0, 0.1, 0.2];
        let (xt, z) = perturb_with(&x0, &y, 0.5, &p(), vec![0.0; 3]).unwrap();
        assert_eq!(xt, mean(&x0, &y, 0.5, &p()).unwrap());
        assert_eq!(z, vec![0.0; 3]);
        let mut rng = RandomSource::new(1);
        assert!(matches!(
            sample_perturbed(&x0, &y, 0.01, &p(), &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noiseless_forward_follows_mean() {
        let flat = SdeParams { sigma_max: 1e-4, ..p() };
        let mut rng = RandomSource::new(0);
        let x0 = [1.0, -0.5];
        let y = [0.0, 0.5];
        for steps in [100, 1000] {
            let xt = euler_maruyama_forward(&x0, &y, &flat, steps, &mut rng).unwrap();
            let m = mean(&x0, &y, 1.0, &flat).unwrap();
            for (a, b) in xt.iter().zip(&m) {
                // first-order scheme: global error <= C / steps
                assert!((a - b).abs() < 2.0 / steps as f64, "{a} vs {b} at {steps}");
            }
        }
        assert!(euler_maruyama_forward(&x0, &y, &flat, 50, &mut rng).is_err());
    }

    #[test]
    fn kv_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sde.toml");
        let params = SdeParams {
            n_steps: 15,
            ..p()
        };
        params.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["gamma", "sigma_min", "sigma_max", "T", "N", "t_eps"] {
            assert!(text.contains(key), "{key} missing in {text}");
        }
        assert_eq!(SdeParams::load(&path).unwrap(), params);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SdeParams { sigma_min: 0.0, ..p() }.validate().is_err());
        assert!(SdeParams { sigma_max: 1e-5, ..p() }.validate().is_err());
        assert!(SdeParams { t_eps: 2.0, ..p() }.validate().is_err());
        assert!(SdeParams { n_steps: 0, ..p() }.validate().is_err());
    }
}
