//! Synthetic data, WAV I/O and objective metrics.

pub mod fft;
pub mod metrics;
pub mod synth;
pub mod wav;

pub use metrics::{lsd, sdr_db, stft_magnitudes, SpectrumFrame, LSD_FRAME, LSD_HOP};
pub use synth::{normalize_peak, synthesize_pair, CleanKind, MixSpec, NoiseKind};
pub use wav::{read_wav, write_wav};
