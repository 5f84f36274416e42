//! Synthetic clean/noisy pairs at an exact SNR.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::fft::{fft, ifft};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::signal::{energy, Signal};

/// Per-sample mean of the `GaussianToy` clean signal.
pub const TOY_MEAN: f64 = 0.5;
/// Per-sample variance of the `GaussianToy` clean signal.
pub const TOY_VAR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanKind {
    /// Two to four partials between 100 and 800 Hz with slow amplitude
    /// envelopes.
    SinusoidSum,
    /// Resonant second-order autoregression driven by white noise.
    ArProcess,
    /// IID `N(TOY_MEAN, TOY_VAR)` samples.
    GaussianToy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// White noise shaped to fall 3 dB per octave.
    Pink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub clean: CleanKind,
    pub noise: NoiseKind,
    /// Target SNR; `inf` means no noise.
    #[serde(with = "extended_real")]
    pub snr_db: f64,
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    pub seed: u64,
}

fn default_rate() -> u32 {
    16000
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid snr_db {}", self.snr_db)));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        ((self.duration_s * self.sample_rate as f64).round() as usize).max(1)
    }
}

/// JSON has no infinity, so `inf` travels as the string `"inf"`.
mod extended_real {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// Returns `(x0, y)` with `y = x0 + c n` and `c` chosen so that
/// `10 log10(||x0||^2 / ||c n||^2) = snr_db`.
pub fn synthesize_pair(spec: &MixSpec) -> Result<(Signal, Signal)> {
    spec.validate()?;
    let len = spec.n_samples();
    let rate = spec.sample_rate;
    let mut clean_rng = RandomSource::with_stream(spec.seed, 0);
    let mut noise_rng = RandomSource::with_stream(spec.seed, 1);
    let x0 = match spec.clean {
        CleanKind::SinusoidSum => sinusoid_sum(len, rate as f64, &mut clean_rng),
        CleanKind::ArProcess => ar_process(len, rate as f64, &mut clean_rng),
        CleanKind::GaussianToy => (0..len)
            .map(|_| TOY_MEAN + TOY_VAR.sqrt() * clean_rng.normal())
            .collect(),
    };
    let y = if spec.snr_db == f64::INFINITY {
        x0.clone()
    } else {
        let noise = match spec.noise {
            NoiseKind::White => noise_rng.normal_vec(len),
            NoiseKind::Pink => pink_noise(len, &mut noise_rng)?,
        };
        let (ex, en) = (energy(&x0), energy(&noise));
        if ex == 0.0 || en == 0.0 {
            return Err(Error::Domain("cannot set the SNR of a silent signal".into()));
        }
        let c = (ex / (en * 10f64.powf(spec.snr_db / 10.0))).sqrt();
        x0.iter().zip(&noise).map(|(x, n)| x + c * n).collect()
    };
    Ok((Signal::new(x0, rate)?, Signal::new(y, rate)?))
}

fn sinusoid_sum(len: usize, rate: f64, rng: &mut RandomSource) -> Vec<f64> {
    let partials = 2 + rng.index(3);
    let tau = 2.0 * std::f64::consts::PI;
    let comps: Vec<[f64; 5]> = (0..partials)
        .map(|_| {
            [
                rng.uniform(100.0, 800.0),
                rng.uniform(0.3, 1.0),
                rng.uniform(0.0, tau),
                rng.uniform(0.5, 4.0),
                rng.uniform(0.0, tau),
            ]
        })
        .collect();
    (0..len)
        .map(|i| {
            let t = i as f64 / rate;
            comps
                .iter()
                .map(|[f, a, ph, env_f, env_ph]| {
                    let env = 0.6 + 0.4 * (tau * env_f * t + env_ph).sin();
                    a * env * (tau * f * t + ph).sin()
                })
                .sum::<f64>()
                / partials as f64
        })
        .collect()
}

fn ar_process(len: usize, rate: f64, rng: &mut RandomSource) -> Vec<f64> {
    let radius: f64 = 0.98;
    let theta = 2.0 * std::f64::consts::PI * rng.uniform(200.0, 1000.0) / rate;
    let (a1, a2) = (2.0 * radius * theta.cos(), -radius * radius);
    let burn = 500;
    let (mut p1, mut p2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len + burn {
        let v = a1 * p1 + a2 * p2 + rng.normal();
        p2 = p1;
        p1 = v;
        if i >= burn {
            out.push(v);
        }
    }
    let rms = (energy(&out) / len as f64).sqrt().max(f64::MIN_POSITIVE);
    out.iter().map(|v| 0.3 * v / rms).collect()
}

/// White noise with each positive-frequency bin scaled by `1/sqrt(k)`.
pub fn pink_noise(len: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let m = len.next_power_of_two().max(2);
    let mut re = rng.normal_vec(m);
    let mut im = vec![0.0; m];
    fft(&mut re, &mut im)?;
    re[0] = 0.0;
    im[0] = 0.0;
    for k in 1..m {
        let f = k.min(m - k) as f64;
        let s = 1.0 / f.sqrt();
        re[k] *= s;
        im[k] *= s;
    }
    ifft(&mut re, &mut im)?;
    re.truncate(len);
    Ok(re)
}

/// Scales `y` so its peak magnitude is `target`. Returns the scaled signal
/// and the factor applied; silent input is returned unchanged with factor 1.
pub fn normalize_peak(y: &[f64], target: f64) -> (Vec<f64>, f64) {
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let factor = if peak > 0.0 { target / peak } else { 1.0 };
    (y.iter().map(|v| v * factor).collect(), factor)
}
