//! Chunk-level streaming enhancement.
//!
//! Each chunk runs the whole reverse process on its own. The score network
//! at step `n` starts from the state it left behind at step `n` of the
//! previous chunk, and the guidance denoiser carries its own state, so
//! information flows forward across chunks but never backward.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::rng::RandomSource;
use crate::sampler::{reverse_chunk, SamplerConfig};
use crate::score::{DenoiserModel, GuidanceSchedule, HistoryState, ScoreModel};
use crate::sde::SdeParams;
use crate::signal::all_finite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub chunk_ms: f64,
    pub sample_rate: u32,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            chunk_ms: 50.0,
            sample_rate: 16000,
        }
    }
}

impl StreamConfig {
    /// Samples per chunk, `K = chunk_ms * rate / 1000`.
    pub fn chunk_size(&self) -> usize {
        (self.chunk_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chunk_ms > 0.0 && self.chunk_ms.is_finite()) || self.sample_rate == 0 {
            return Err(Error::Config(format!(
                "invalid stream config: chunk_ms = {}, rate = {}",
                self.chunk_ms, self.sample_rate
            )));
        }
        let exact = self.chunk_ms * self.sample_rate as f64 / 1000.0;
        if self.chunk_size() == 0 || (exact - self.chunk_size() as f64).abs() > 1e-9 * exact.max(1.0) {
            return Err(Error::Config(format!(
                "chunk of {} ms at {} Hz is not a whole number of samples",
                self.chunk_ms, self.sample_rate
            )));
        }
        Ok(())
    }
}

/// Recurrent states carried from one chunk to the next: one per reverse
/// step for the score network, one for the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBank {
    chunk_size: usize,
    score_states: Vec<HistoryState>,
    denoiser_state: HistoryState,
    chunks: u64,
}

impl HistoryBank {
    /// A fresh bank with all states zero.
    pub fn new(n_steps: usize, score_dim: usize, denoiser_dim: usize, chunk_size: usize) -> Self {
        Self {
            chunk_size,
            score_states: vec![vec![0.0; score_dim]; n_steps],
            denoiser_state: vec![0.0; denoiser_dim],
            chunks: 0,
        }
    }

    pub fn for_models(provider: &Provider<'_>, params: &SdeParams, stream: &StreamConfig) -> Self {
        Self::new(
            params.n_steps,
            provider.score.state_dim(),
            provider.denoiser.map_or(0, |d| d.state_dim()),
            stream.chunk_size(),
        )
    }

    pub fn len(&self) -> usize {
        self.score_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.score_states.is_empty()
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// State for step `n` is at index `n - 1`.
    pub fn score_states(&self) -> &[HistoryState] {
        &self.score_states
    }

    pub fn denoiser_state(&self) -> &[f64] {
        &self.denoiser_state
    }

    pub fn chunks_processed(&self) -> u64 {
        self.chunks
    }
}

/// Models used by the streaming engine.
#[derive(Clone, Copy)]
pub struct Provider<'a> {
    pub score: &'a dyn ScoreModel,
    pub denoiser: Option<&'a dyn DenoiserModel>,
}

/// Enhances one chunk of exactly `K` samples and advances `bank`.
#[allow(clippy::too_many_arguments)]
pub fn process_chunk(
    y_c: &[f64],
    bank: &mut HistoryBank,
    provider: &Provider<'_>,
    schedule: GuidanceSchedule,
    cfg: &SamplerConfig,
    params: &SdeParams,
    rng: &mut RandomSource,
    ledger: &mut CostLedger,
) -> Result<Vec<f64>> {
    if y_c.len() != bank.chunk_size {
        return Err(Error::Dimension(format!(
            "chunk has {} samples, stream expects {}",
            y_c.len(),
            bank.chunk_size
        )));
    }
    if !all_finite(y_c) {
        return Err(Error::Domain("non-finite input samples".into()));
    }
    if bank.score_states.len() != params.n_steps
        || bank.score_states.first().map(Vec::len) != Some(provider.score.state_dim())
    {
        return Err(Error::Config(format!(
            "history bank ({} states) does not match N = {} and the score model",
            bank.score_states.len(),
            params.n_steps
        )));
    }
    let x_d = if schedule.n_phi > 0 {
        let den = provider.denoiser.ok_or_else(|| {
            Error::Config("hybrid streaming needs a stateful denoiser".into())
        })?;
        if bank.denoiser_state.len() != den.state_dim() {
            return Err(Error::Config("history bank does not match the denoiser".into()));
        }
        let (x_d, next) = den.denoise(y_c, &bank.denoiser_state)?;
        ledger.record_denoiser_forward(den.macs_per_forward(y_c.len()));
        bank.denoiser_state = next;
        Some(x_d)
    } else {
        None
    };
    let out = reverse_chunk(
        y_c,
        provider.score,
        x_d.as_deref(),
        schedule,
        cfg,
        params,
        rng,
        &mut bank.score_states,
        ledger,
    )?;
    bank.chunks += 1;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Delay imposed by chunking alone, equal to the chunk length.
    pub algorithmic_latency_ms: f64,
    pub chunk_size: usize,
    pub sample_rate: u32,
    /// Wall-clock processing time of each chunk.
    pub chunk_wall_s: Vec<f64>,
}

/// Mean per-chunk processing time over the chunk duration.
pub fn realtime_factor(report: &LatencyReport) -> Result<f64> {
    if report.chunk_wall_s.is_empty() {
        return Err(Error::Domain("latency report has no chunks".into()));
    }
    let mean = report.chunk_wall_s.iter().sum::<f64>() / report.chunk_wall_s.len() as f64;
    Ok(mean / (report.algorithmic_latency_ms / 1000.0))
}

/// Splits `y` into `ceil(L / K)` chunks (the last zero-padded), enhances
/// them in order and trims the result to `L`. Chunk `c` draws its noise
/// from stream `c` of `seed`.
pub fn enhance_stream(
    y: &[f64],
    stream: &StreamConfig,
    provider: &Provider<'_>,
    schedule: GuidanceSchedule,
    cfg: &SamplerConfig,
    params: &SdeParams,
    seed: u64,
) -> Result<(Vec<f64>, CostLedger, LatencyReport)> {
    stream.validate()?;
    params.validate()?;
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::Domain("empty input".into()));
    }
    let k = stream.chunk_size();
    let mut bank = HistoryBank::for_models(provider, params, stream);
    let mut ledger = CostLedger::default();
    let mut report = LatencyReport {
        algorithmic_latency_ms: stream.chunk_ms,
        chunk_size: k,
        sample_rate: stream.sample_rate,
        chunk_wall_s: Vec::new(),
    };
    let mut out = Vec::with_capacity(y.len().div_ceil(k) * k);
    let mut padded = vec![0.0; k];
    for (c, chunk) in y.chunks(k).enumerate() {
        padded[..chunk.len()].copy_from_slice(chunk);
        padded[chunk.len()..].iter_mut().for_each(|v| *v = 0.0);
        let mut rng = RandomSource::with_stream(seed, c as u64);
        let start = Instant::now();
        let x = process_chunk(&padded, &mut bank, provider, schedule, cfg, params, &mut rng, &mut ledger)?;
        report.chunk_wall_s.push(start.elapsed().as_secs_f64());
        out.extend_from_slice(&x);
    }
    out.truncate(y.len());
    Ok((out, ledger, report))
}

/// Push/pull streaming session over owned models.
///
/// Samples are buffered until a full chunk is available; each full chunk is
/// enhanced immediately and queued for [`pull`](Self::pull). Input is
/// multiplied by `gain` before enhancement and output divided by it.
pub struct StreamSession {
    score: Arc<dyn ScoreModel>,
    denoiser: Option<Arc<dyn DenoiserModel>>,
    schedule: GuidanceSchedule,
    sampler: SamplerConfig,
    params: SdeParams,
    stream: StreamConfig,
    seed: u64,
    gain: f64,
    bank: HistoryBank,
    pending: Vec<f64>,
    ready: VecDeque<Vec<f64>>,
    ledger: CostLedger,
    report: LatencyReport,
    finished: bool,
}

impl std::fmt::Debug for StreamSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StreamSession")
            .field("chunks", &self.bank.chunks)
            .field("pending", &self.pending.len())
            .field("ready", &self.ready.len())
            .field("finished", &self.finished)
            .finish()
    }
}

impl StreamSession {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        score: Arc<dyn ScoreModel>,
        denoiser: Option<Arc<dyn DenoiserModel>>,
        schedule: GuidanceSchedule,
        sampler: SamplerConfig,
        params: SdeParams,
        stream: StreamConfig,
        seed: u64,
        gain: f64,
    ) -> Result<Self> {
        stream.validate()?;
        params.validate()?;
        sampler.validate()?;
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::Config(format!("gain must be positive, got {gain}")));
        }
        if schedule.n_phi > 0 && denoiser.is_none() {
            return Err(Error::Config("hybrid streaming needs a stateful denoiser".into()));
        }
        let bank = HistoryBank::new(
            params.n_steps,
            score.state_dim(),
            denoiser.as_ref().map_or(0, |d| d.state_dim()),
            stream.chunk_size(),
        );
        Ok(Self {
            report: LatencyReport {
                algorithmic_latency_ms: stream.chunk_ms,
                chunk_size: stream.chunk_size(),
                sample_rate: stream.sample_rate,
                chunk_wall_s: Vec::new(),
            },
            score,
            denoiser,
            schedule,
            sampler,
            params,
            stream,
            seed,
            gain,
            bank,
            pending: Vec::new(),
            ready: VecDeque::new(),
            ledger: CostLedger::default(),
            finished: false,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.stream
    }

    fn run(&mut self, chunk: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = chunk.iter().map(|v| v * self.gain).collect();
        let provider = Provider {
            score: self.score.as_ref(),
            denoiser: self.denoiser.as_deref(),
        };
        let mut rng = RandomSource::with_stream(self.seed, self.bank.chunks);
        let start = Instant::now();
        let x = process_chunk(
            &scaled,
            &mut self.bank,
            &provider,
            self.schedule,
            &self.sampler,
            &self.params,
            &mut rng,
            &mut self.ledger,
        )?;
        self.report.chunk_wall_s.push(start.elapsed().as_secs_f64());
        Ok(x.into_iter().map(|v| v / self.gain).collect())
    }

    /// Buffers `samples` and enhances every completed chunk. Returns the
    /// number of chunks produced.
    pub fn push(&mut self, samples: &[f64]) -> Result<usize> {
        if self.finished {
            return Err(Error::Config("stream already finished".into()));
        }
        self.pending.extend_from_slice(samples);
        let k = self.bank.chunk_size;
        let mut produced = 0;
        while self.pending.len() >= k {
            let chunk: Vec<f64> = self.pending.drain(..k).collect();
            let x = self.run(&chunk)?;
            self.ready.push_back(x);
            produced += 1;
        }
        Ok(produced)
    }

    /// Next enhanced chunk, if any.
    pub fn pull(&mut self) -> Option<Vec<f64>> {
        self.ready.pop_front()
    }

    /// Zero-pads and enhances any remaining partial chunk; its output is
    /// trimmed to the samples actually pushed. No pushes are accepted after.
    pub fn finish(&mut self) -> Result<()> {
        if self.finished {
            return Ok(());
        }
        self.finished = true;
        if !self.pending.is_empty() {
            let len = self.pending.len();
            let mut chunk = std::mem::take(&mut self.pending);
            chunk.resize(self.bank.chunk_size, 0.0);
            let mut x = self.run(&chunk)?;
            x.truncate(len);
            self.ready.push_back(x);
        }
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn pending_samples(&self) -> usize {
        self.pending.len()
    }

    pub fn bank(&self) -> &HistoryBank {
        &self.bank
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn report(&self) -> &LatencyReport {
        &self.report
    }
}
