//! End-to-end commands: forward-process verification, training,
//! enhancement, the guidance sweep and cost reporting.
//!
//! Requests and results are plain serde types so they can be echoed into a
//! run manifest or sent over the wire unchanged.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{lsd, normalize_peak, sdr_db, synthesize_pair, CleanKind, MixSpec, NoiseKind, LSD_FRAME, LSD_HOP};
use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::nn::{
    train as fit, Checkpoint, DenoiserConfig, DenoiserNet, LossCurve, Pair, ScoreNet, ScoreNetConfig,
    TrainConfig,
};
use crate::rng::RandomSource;
use crate::sampler::{reverse_process, Guide, SamplerConfig};
use crate::score::{DenoiserModel, GuidanceSchedule};
use crate::sde::{euler_maruyama, SdeParams};
use crate::signal::Signal;
use crate::streaming::{enhance_stream, LatencyReport, Provider, StreamConfig};

/// Peak level inputs are scaled to before enhancement.
pub const INPUT_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub clean: CleanKind,
    pub noise: NoiseKind,
    pub snr_db: f64,
    pub sample_rate: u32,
    /// Length of each training segment.
    pub segment_s: f64,
    pub n_train: usize,
    /// Length of each test utterance.
    pub test_s: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            clean: CleanKind::SinusoidSum,
            noise: NoiseKind::White,
            snr_db: 5.0,
            sample_rate: 16000,
            segment_s: 0.1,
            n_train: 400,
            test_s: 1.0,
            n_test: 20,
            seed: 0,
        }
    }
}

impl DataConfig {
    fn pairs(&self, count: usize, duration_s: f64, offset: u64) -> Result<Vec<Pair>> {
        (0..count as u64)
            .map(|i| {
                let spec = MixSpec {
                    clean: self.clean,
                    noise: self.noise,
                    snr_db: self.snr_db,
                    duration_s,
                    sample_rate: self.sample_rate,
                    seed: self.seed.wrapping_mul(1 << 32).wrapping_add(offset + i),
                };
                let (x0, y) = synthesize_pair(&spec)?;
                let (noisy, factor) = normalize_peak(y.samples(), INPUT_PEAK);
                let clean = x0.samples().iter().map(|v| v * factor).collect();
                Ok(Pair { clean, noisy })
            })
            .collect()
    }

    /// Peak-normalized training segments.
    pub fn training_set(&self) -> Result<Vec<Pair>> {
        self.pairs(self.n_train, self.segment_s, 0)
    }

    /// Peak-normalized test utterances, disjoint in seed from the training set.
    pub fn test_set(&self) -> Result<Vec<Pair>> {
        self.pairs(self.n_test, self.test_s, 1 << 31)
    }
}

/// Everything a run can be configured with; each section is optional in
/// TOML form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub sde: SdeParams,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub score_net: ScoreNetShape,
    pub denoiser: DenoiserConfig,
    pub stream: StreamConfig,
}

/// Score network settings other than the SDE, which comes from `[sde]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreNetShape {
    pub frame_size: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub sigma_data: f64,
    pub output: crate::nn::ScoreOutput,
}

impl Default for ScoreNetShape {
    fn default() -> Self {
        let c = ScoreNetConfig::default();
        Self {
            frame_size: c.frame_size,
            hidden: c.hidden,
            time_dim: c.time_dim,
            sigma_data: c.sigma_data,
            output: c.output,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sde.validate()?;
        self.sampler.validate()?;
        self.train.validate()?;
        self.stream.validate()?;
        Ok(())
    }

    pub fn score_net_config(&self) -> ScoreNetConfig {
        ScoreNetConfig {
            frame_size: self.score_net.frame_size,
            hidden: self.score_net.hidden,
            time_dim: self.score_net.time_dim,
            sigma_data: self.score_net.sigma_data,
            output: self.score_net.output,
            sde: self.sde,
        }
    }
}

// forward-process verification

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardRequest {
    pub sde: SdeParams,
    pub paths: usize,
    pub steps: usize,
    pub grid_points: usize,
    pub x0: f64,
    pub y: f64,
    pub seed: u64,
}

impl Default for ForwardRequest {
    fn default() -> Self {
        Self {
            sde: SdeParams::default(),
            paths: 10_000,
            steps: 2000,
            grid_points: 10,
            x0: 1.0,
            y: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardRow {
    pub t: f64,
    pub mean: f64,
    pub mean_rel_err: f64,
    pub empirical_var: f64,
    pub kernel_var: f64,
}

impl ForwardRow {
    pub fn var_rel_err(&self) -> f64 {
        (self.empirical_var - self.kernel_var).abs() / self.kernel_var
    }
}

pub const FORWARD_CSV_HEADER: &str = "t,mean_rel_err,empirical_var,kernel_var";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTable {
    pub rows: Vec<ForwardRow>,
}

impl ForwardTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{FORWARD_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.t, r.mean_rel_err, r.empirical_var, r.kernel_var
            ));
        }
        out
    }
}

/// Simulates `paths` independent scalar paths and compares their moments
/// with the closed-form kernel at `grid_points` evenly spaced times.
pub fn simulate_forward(req: &ForwardRequest) -> Result<ForwardTable> {
    req.sde.validate()?;
    if req.paths < 2 || req.grid_points == 0 || req.steps < req.grid_points {
        return Err(Error::Config(
            "need >= 2 paths, >= 1 grid point and steps >= grid points".into(),
        ));
    }
    if !req.steps.is_multiple_of(req.grid_points) {
        return Err(Error::Config("steps must be a multiple of grid_points".into()));
    }
    let stride = req.steps / req.grid_points;
    let x0 = vec![req.x0; req.paths];
    let y = vec![req.y; req.paths];
    let mut rng = RandomSource::new(req.seed);
    let mut rows = Vec::with_capacity(req.grid_points);
    let p = req.sde;
    euler_maruyama(&x0, &y, &p, req.steps, &mut rng, |k, t, x| {
        if k == 0 || k % stride != 0 {
            return;
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let a = p.decay(t);
        let mu = a * req.x0 + (1.0 - a) * req.y;
        rows.push(ForwardRow {
            t,
            mean,
            mean_rel_err: (mean - mu).abs() / mu.abs().max(f64::MIN_POSITIVE),
            empirical_var: var,
            kernel_var: p.var(t),
        });
    })?;
    Ok(ForwardTable { rows })
}

// training

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Score,
    Denoiser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub role: ModelRole,
    pub config: AppConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub loss: LossCurve,
}

pub fn train_model(req: &TrainRequest) -> Result<TrainResult> {
    let cfg = &req.config;
    cfg.validate()?;
    let data = cfg.data.training_set()?;
    let seed = cfg.train.seed;
    match req.role {
        ModelRole::Score => {
            let mut net = ScoreNet::new(cfg.score_net_config(), seed)?;
            let loss = fit(&mut net, &data, &cfg.train)?;
            Ok(TrainResult {
                checkpoint: Checkpoint::from_score(&net, seed, Some(cfg.train.clone())),
                loss,
            })
        }
        ModelRole::Denoiser => {
            let mut net = DenoiserNet::new(cfg.denoiser.clone(), seed)?;
            let loss = fit(&mut net, &data, &cfg.train)?;
            Ok(TrainResult {
                checkpoint: Checkpoint::from_denoiser(&net, seed, Some(cfg.train.clone())),
                loss,
            })
        }
    }
}

// enhancement

/// Guidance threshold as a step count or a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guidance {
    NPhi(usize),
    TPhi(f64),
}

impl Guidance {
    pub fn schedule(&self, params: &SdeParams) -> Result<GuidanceSchedule> {
        match *self {
            Guidance::NPhi(n) => GuidanceSchedule::from_n_phi(n, params),
            Guidance::TPhi(t) => GuidanceSchedule::from_t_phi(t, params),
        }
    }
}

/// Checks that a score network was trained on the SDE used for sampling.
/// The step count and `t_eps` may differ.
pub fn check_compatible(net: &ScoreNet, params: &SdeParams) -> Result<()> {
    let s = &net.config.sde;
    if s.gamma != params.gamma
        || s.sigma_min != params.sigma_min
        || s.sigma_max != params.sigma_max
        || s.t_max != params.t_max
    {
        return Err(Error::Config(format!(
            "score net trained with gamma = {}, sigma = [{}, {}], T = {}; sampler uses {}, [{}, {}], {}",
            s.gamma, s.sigma_min, s.sigma_max, s.t_max, params.gamma, params.sigma_min, params.sigma_max, params.t_max
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceRequest {
    pub noisy: Signal,
    pub score: Checkpoint,
    pub denoiser: Option<Checkpoint>,
    pub guidance: Guidance,
    /// `None` for offline processing of the whole utterance.
    pub stream: Option<StreamConfig>,
    pub sampler: SamplerConfig,
    pub sde: SdeParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceResult {
    pub enhanced: Signal,
    pub ledger: CostLedger,
    pub n_phi: usize,
    pub t_phi: f64,
    /// Factor applied to the input before enhancement (undone on output).
    pub gain: f64,
    pub chunk_size: Option<usize>,
    pub latency: Option<LatencyReport>,
    pub wall_s: f64,
}

/// Loaded models ready for enhancement.
pub struct Models {
    pub score: ScoreNet,
    pub denoiser: Option<DenoiserNet>,
}

impl Models {
    pub fn from_checkpoints(score: &Checkpoint, denoiser: Option<&Checkpoint>) -> Result<Self> {
        Ok(Self {
            score: score.score_net()?,
            denoiser: denoiser.map(Checkpoint::denoiser).transpose()?,
        })
    }
}

/// Enhances a peak-normalized signal; no gain handling.
#[allow(clippy::too_many_arguments)]
pub fn enhance_normalized(
    y: &[f64],
    models: &Models,
    schedule: GuidanceSchedule,
    stream: Option<&StreamConfig>,
    sampler: &SamplerConfig,
    params: &SdeParams,
    seed: u64,
) -> Result<(Vec<f64>, CostLedger, Option<LatencyReport>)> {
    check_compatible(&models.score, params)?;
    let den = models.denoiser.as_ref().map(|d| d as &dyn DenoiserModel);
    if schedule.n_phi > 0 && den.is_none() {
        return Err(Error::Config("n_phi > 0 needs a denoiser checkpoint".into()));
    }
    match stream {
        Some(sc) => {
            let provider = Provider {
                score: &models.score,
                denoiser: den,
            };
            let (x, ledger, report) = enhance_stream(y, sc, &provider, schedule, sampler, params, seed)?;
            Ok((x, ledger, Some(report)))
        }
        None => {
            let fs = models.score.config.frame_size;
            // pad to whole frames, like the last streaming chunk
            let mut padded = y.to_vec();
            padded.resize(y.len().div_ceil(fs) * fs, 0.0);
            let guide = den.map_or(Guide::None, Guide::Denoiser);
            let (mut x, ledger) = reverse_process(
                &padded,
                &models.score,
                guide,
                schedule,
                sampler,
                params,
                &mut RandomSource::new(seed),
            )?;
            x.truncate(y.len());
            Ok((x, ledger, None))
        }
    }
}

pub fn enhance(req: &EnhanceRequest) -> Result<EnhanceResult> {
    let models = Models::from_checkpoints(&req.score, req.denoiser.as_ref())?;
    let schedule = req.guidance.schedule(&req.sde)?;
    if let Some(sc) = &req.stream {
        if sc.sample_rate != req.noisy.sample_rate() {
            return Err(Error::Config(format!(
                "stream configured for {} Hz, input is {} Hz",
                sc.sample_rate,
                req.noisy.sample_rate()
            )));
        }
    }
    let (y, gain) = normalize_peak(req.noisy.samples(), INPUT_PEAK);
    let start = Instant::now();
    let (x, ledger, latency) = enhance_normalized(
        &y,
        &models,
        schedule,
        req.stream.as_ref(),
        &req.sampler,
        &req.sde,
        req.seed,
    )?;
    let wall_s = start.elapsed().as_secs_f64();
    let out = x.into_iter().map(|v| v / gain).collect();
    Ok(EnhanceResult {
        enhanced: Signal::new(out, req.noisy.sample_rate())?,
        ledger,
        n_phi: schedule.n_phi,
        t_phi: schedule.t_phi,
        gain,
        chunk_size: req.stream.as_ref().map(StreamConfig::chunk_size),
        latency,
        wall_s,
    })
}

// guidance sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub score: Checkpoint,
    pub denoiser: Checkpoint,
    pub data: DataConfig,
    pub sde: SdeParams,
    pub sampler: SamplerConfig,
    pub n_phi: Vec<usize>,
    /// Sampler seeds `0..seeds`.
    pub seeds: u64,
    pub stream: Option<StreamConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_phi: usize,
    /// `None` in the per-`n_phi` median rows.
    pub seed: Option<u64>,
    /// Mean over the test set.
    pub sdr_db: f64,
    pub lsd_db: f64,
    pub score_forwards: u64,
    pub macs: u64,
    pub rtf: f64,
}

pub const SWEEP_CSV_HEADER: &str = "n_phi,seed,sdr_db,lsd_db,score_forwards,macs,rtf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub medians: Vec<SweepRow>,
    /// Mean input SDR of the test set.
    pub input_sdr_db: f64,
    /// Mean SDR of the denoiser alone.
    pub denoiser_sdr_db: f64,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in self.rows.iter().chain(&self.medians) {
            let seed = r.seed.map_or("median".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{},{seed},{:.6},{:.6},{},{},{:.6}\n",
                r.n_phi, r.sdr_db, r.lsd_db, r.score_forwards, r.macs, r.rtf
            ));
        }
        out
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Thread count from `GSE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("GSE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n| *n > 0)
}

/// Runs every `(n_phi, seed)` pair over the test set. Pairs run in
/// parallel on at most `threads` workers; rows come back in key order.
pub fn sweep(req: &SweepRequest, threads: Option<usize>) -> Result<SweepTable> {
    req.sde.validate()?;
    if req.n_phi.is_empty() || req.seeds == 0 {
        return Err(Error::Config("sweep needs n_phi values and seeds".into()));
    }
    let models = Models::from_checkpoints(&req.score, Some(&req.denoiser))?;
    let test = req.data.test_set()?;
    let schedules = req
        .n_phi
        .iter()
        .map(|&n| GuidanceSchedule::from_n_phi(n, &req.sde))
        .collect::<Result<Vec<_>>>()?;
    let den = models.denoiser.as_ref().expect("loaded above");
    let mut input_sdr = 0.0;
    let mut den_sdr = 0.0;
    for p in &test {
        input_sdr += sdr_db(&p.clean, &p.noisy)?;
        let (x_d, _) = den.denoise(&pad_to(&p.noisy, den.config.frame_size), &vec![0.0; den.config.hidden])?;
        den_sdr += sdr_db(&p.clean, &x_d[..p.clean.len()])?;
    }
    let audio_s: f64 = test.iter().map(|p| p.noisy.len() as f64).sum::<f64>() / req.data.sample_rate as f64;

    let keys: Vec<(usize, u64)> = (0..schedules.len())
        .flat_map(|i| (0..req.seeds).map(move |s| (i, s)))
        .collect();
    let run = |&(i, seed): &(usize, u64)| -> Result<SweepRow> {
        let schedule = schedules[i];
        let mut sdr = 0.0;
        let mut spec = 0.0;
        let mut ledger = CostLedger::default();
        let mut wall = 0.0;
        for (u, p) in test.iter().enumerate() {
            let start = Instant::now();
            let (x, l, _) = enhance_normalized(
                &p.noisy,
                &models,
                schedule,
                req.stream.as_ref(),
                &req.sampler,
                &req.sde,
                seed.wrapping_mul(1_000_003).wrapping_add(u as u64),
            )?;
            wall += start.elapsed().as_secs_f64();
            sdr += sdr_db(&p.clean, &x)?;
            spec += lsd(&p.clean, &x, LSD_FRAME, LSD_HOP)?;
            ledger += l;
        }
        let n = test.len() as f64;
        Ok(SweepRow {
            n_phi: schedule.n_phi,
            seed: Some(seed),
            sdr_db: sdr / n,
            lsd_db: spec / n,
            score_forwards: ledger.score_net_forwards,
            macs: ledger.mac_total,
            rtf: wall / audio_s,
        })
    };
    let rows: Vec<SweepRow> = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| keys.par_iter().map(run).collect::<Result<Vec<_>>>())?,
        None => keys.par_iter().map(run).collect::<Result<Vec<_>>>()?,
    };
    let medians = schedules
        .iter()
        .map(|s| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.n_phi == s.n_phi).collect();
            let med = |f: fn(&SweepRow) -> f64| median(&mut group.iter().map(|r| f(r)).collect::<Vec<_>>());
            SweepRow {
                n_phi: s.n_phi,
                seed: None,
                sdr_db: med(|r| r.sdr_db),
                lsd_db: med(|r| r.lsd_db),
                score_forwards: group[0].score_forwards,
                macs: group[0].macs,
                rtf: med(|r| r.rtf),
            }
        })
        .collect();
    let n = test.len() as f64;
    Ok(SweepTable {
        rows,
        medians,
        input_sdr_db: input_sdr / n,
        denoiser_sdr_db: den_sdr / n,
    })
}

fn pad_to(y: &[f64], frame: usize) -> Vec<f64> {
    let mut v = y.to_vec();
    v.resize(y.len().div_ceil(frame) * frame, 0.0);
    v
}

// cost report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostRequest {
    pub sde: SdeParams,
    pub corrector_steps: usize,
    pub n_phi: Vec<usize>,
    /// Utterance length in samples.
    pub length: usize,
    pub score_net: ScoreNetShape,
    pub denoiser: DenoiserConfig,
}

impl Default for CostRequest {
    fn default() -> Self {
        let sde = SdeParams::default();
        Self {
            n_phi: (0..=sde.n_steps).collect(),
            sde,
            corrector_steps: 1,
            length: 16000,
            score_net: ScoreNetShape::default(),
            denoiser: DenoiserConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n_phi: usize,
    pub ledger: CostLedger,
}

pub const COST_CSV_HEADER: &str =
    "n_phi,score_forwards,denoiser_forwards,score_macs,denoiser_macs,mac_total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
}

impl CostTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{COST_CSV_HEADER}\n");
        for r in &self.rows {
            let l = &r.ledger;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n_phi, l.score_net_forwards, l.denoiser_forwards, l.score_macs, l.denoiser_macs, l.mac_total
            ));
        }
        out
    }
}

/// Runs the sampler on a silent-free synthetic input with freshly
/// initialized networks and reports the ledger for each `n_phi`.
pub fn cost_report(req: &CostRequest) -> Result<CostTable> {
    req.sde.validate()?;
    let app = AppConfig {
        sde: req.sde,
        score_net: req.score_net.clone(),
        ..Default::default()
    };
    let models = Models {
        score: ScoreNet::new(app.score_net_config(), 0)?,
        denoiser: Some(DenoiserNet::new(req.denoiser.clone(), 0)?),
    };
    let fs = req.score_net.frame_size;
    let len = req.length.div_ceil(fs).max(1) * fs;
    let y: Vec<f64> = (0..len).map(|i| 0.5 * (0.03 * i as f64).sin()).collect();
    let sampler = SamplerConfig {
        corrector_steps: req.corrector_steps,
        ..Default::default()
    };
    let rows = req
        .n_phi
        .iter()
        .map(|&n| {
            let schedule = GuidanceSchedule::from_n_phi(n, &req.sde)?;
            let (_, ledger, _) = enhance_normalized(&y, &models, schedule, None, &sampler, &req.sde, 0)?;
            Ok(CostRow { n_phi: n, ledger })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable { rows })
}

/// Least-squares line through `(x, y)`; returns `(intercept, slope, max
/// absolute residual)`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let resid = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    (intercept, slope, resid)
}

/// Exact affinity check on integers: every consecutive difference equal.
pub fn is_exactly_affine(values: &[u64]) -> bool {
    values.windows(3).all(|w| {
        (w[1] as i128 - w[0] as i128) == (w[2] as i128 - w[1] as i128)
    })
}
