//! Signal-to-distortion ratio and log-spectral distance.

use serde::{Deserialize, Serialize};

use super::fft::magnitude_spectrum;
use crate::error::{check_same_len, Error, Result};
use crate::signal::energy;

/// Cap on `|sdr_db|`.
pub const SDR_CAP_DB: f64 = 120.0;
pub const LSD_FRAME: usize = 512;
pub const LSD_HOP: usize = 256;
const LSD_EPS: f64 = 1e-8;

/// `10 log10(||ref||^2 / ||ref - est||^2)`, clamped to +-120 dB.
pub fn sdr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_same_len("sdr", reference.len(), estimate.len())?;
    let e_ref = energy(reference);
    if e_ref == 0.0 {
        return Err(Error::Domain("zero reference in sdr".into()));
    }
    let res: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    if res == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (e_ref / res).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// Magnitude spectrum of one windowed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFrame {
    pub magnitudes: Vec<f64>,
    pub frame_size: usize,
    pub hop: usize,
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Hann-windowed magnitude spectra of every full frame.
pub fn stft_magnitudes(x: &[f64], frame_size: usize, hop: usize) -> Result<Vec<SpectrumFrame>> {
    if hop == 0 {
        return Err(Error::Domain("hop must be positive".into()));
    }
    if x.len() < frame_size || frame_size == 0 {
        return Err(Error::Domain(format!(
            "signal of {} samples is shorter than one frame of {frame_size}",
            x.len()
        )));
    }
    let window = hann(frame_size);
    let n_frames = (x.len() - frame_size) / hop + 1;
    let mut buf = vec![0.0; frame_size];
    (0..n_frames)
        .map(|f| {
            let seg = &x[f * hop..f * hop + frame_size];
            for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = s * w;
            }
            Ok(SpectrumFrame {
                magnitudes: magnitude_spectrum(&buf)?,
                frame_size,
                hop,
            })
        })
        .collect()
}

/// Mean over frames of the RMS difference (over bins) of the dB magnitude
/// spectra, with a `1e-8` magnitude floor.
pub fn lsd(reference: &[f64], estimate: &[f64], frame_size: usize, hop: usize) -> Result<f64> {
    check_same_len("lsd", reference.len(), estimate.len())?;
    let a = stft_magnitudes(reference, frame_size, hop)?;
    let b = stft_magnitudes(estimate, frame_size, hop)?;
    let mut total = 0.0;
    for (fa, fb) in a.iter().zip(&b) {
        let ms: f64 = fa
            .magnitudes
            .iter()
            .zip(&fb.magnitudes)
            .map(|(x, y)| (20.0 * (x + LSD_EPS).log10() - 20.0 * (y + LSD_EPS).log10()).powi(2))
            .sum::<f64>()
            / fa.magnitudes.len() as f64;
        total += ms.sqrt();
    }
    Ok(total / a.len() as f64)
}
