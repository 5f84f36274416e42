//! The `gse` command line. Every command except `serve` and `synth` is
//! executed by the service: either the one named by `--server`, or an
//! in-process instance bound to a loopback port for the duration of the run.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gse_client::{Client, ClientError};
use gse_core::api::StreamOpenRequest;
use gse_core::audio::{normalize_peak, read_wav, write_wav};
use gse_core::nn::Checkpoint;
use gse_core::pipeline::{
    AppConfig, CostRequest, DataConfig, EnhanceRequest, ForwardRequest, Guidance, ModelRole,
    SweepRequest, TrainRequest, INPUT_PEAK,
};
use gse_core::streaming::StreamConfig;
use gse_core::{SamplerConfig, SdeParams, Signal};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub mod manifest;

pub use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gse_core::Error),
    #[error(transparent)]
    Service(#[from] ClientError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Clap(#[from] clap::Error),
}

impl CliError {
    fn kind(&self) -> &str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Service(e) => e.kind(),
            CliError::Usage(_) | CliError::Clap(_) => "config",
            CliError::Io { .. } => "io",
        }
    }

    /// 2 for configuration and input errors, 3 for numerical aborts, 1
    /// otherwise.
    pub fn exit_code(&self) -> u8 {
        if let CliError::Clap(e) = self {
            return e.exit_code() as u8;
        }
        match self.kind() {
            "config" | "dimension" | "domain" | "unsupported_format" | "malformed" | "not_found" => 2,
            "numerical" => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "gse", version, about = "Diffusion speech enhancement with discriminative guidance")]
pub struct Cli {
    /// Service URL; an in-process server is started when omitted.
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// TOML file with [sde], [sampler], [train], [data], [score_net],
    /// [denoiser] and [stream] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Compare Monte-Carlo forward paths with the closed-form kernel.
    SimulateForward {
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        grid_points: usize,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        #[arg(long, default_value_t = 0.5)]
        y: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic test set as clean/noisy WAV pairs.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the score network or the denoiser.
    Train {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[command(flatten)]
        common: Common,
    },
    /// Enhance a WAV file.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        denoiser: Option<PathBuf>,
        #[command(flatten)]
        guidance: GuidanceArgs,
        /// Chunk-level streaming (on/off).
        #[arg(long, default_value = "off", value_parser = parse_switch, action = clap::ArgAction::Set)]
        streaming: bool,
        #[arg(long)]
        chunk_ms: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the number of discriminative steps over seeds.
    Sweep {
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        denoiser: PathBuf,
        /// Comma-separated step counts; defaults to 0..=N in steps of 6.
        #[arg(long, value_delimiter = ',')]
        n_phi: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value = "off", value_parser = parse_switch, action = clap::ArgAction::Set)]
        streaming: bool,
        #[arg(long)]
        chunk_ms: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Forward-pass and MAC counts per number of discriminative steps.
    Cost {
        #[arg(long, value_delimiter = ',')]
        n_phi: Vec<usize>,
        /// Utterance length in samples.
        #[arg(long, default_value_t = 16000)]
        length: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the run recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        /// Output directory; defaults to the one in the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct GuidanceArgs {
    /// Number of reverse steps using the discriminative score.
    #[arg(long)]
    pub n_phi: Option<usize>,
    /// Time threshold above which the discriminative score is used.
    #[arg(long)]
    pub t_phi: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Score,
    Denoiser,
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected on/off, got {other}")),
    }
}

/// A fully resolved command, as recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    SimulateForward {
        request: ForwardRequest,
    },
    Synth {
        data: DataConfig,
    },
    Train {
        role: ModelRole,
        config: AppConfig,
    },
    Enhance {
        input: PathBuf,
        score: PathBuf,
        denoiser: Option<PathBuf>,
        guidance: Guidance,
        stream: Option<StreamConfig>,
        sampler: SamplerConfig,
        sde: SdeParams,
        seed: u64,
    },
    Sweep {
        score: PathBuf,
        denoiser: PathBuf,
        data: DataConfig,
        sde: SdeParams,
        sampler: SamplerConfig,
        n_phi: Vec<usize>,
        seeds: u64,
        stream: Option<StreamConfig>,
    },
    Cost {
        request: CostRequest,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::SimulateForward { .. } => "simulate-forward",
            Invocation::Synth { .. } => "synth",
            Invocation::Train { .. } => "train",
            Invocation::Enhance { .. } => "enhance",
            Invocation::Sweep { .. } => "sweep",
            Invocation::Cost { .. } => "cost",
        }
    }

    fn seed(&self) -> u64 {
        match self {
            Invocation::SimulateForward { request } => request.seed,
            Invocation::Synth { data } => data.seed,
            Invocation::Train { config, .. } => config.train.seed,
            Invocation::Enhance { seed, .. } => *seed,
            Invocation::Sweep { data, .. } => data.seed,
            Invocation::Cost { .. } => 0,
        }
    }

    fn needs_service(&self) -> bool {
        !matches!(self, Invocation::Synth { .. })
    }
}

fn stream_config(cfg: &AppConfig, streaming: bool, chunk_ms: Option<f64>) -> Option<StreamConfig> {
    streaming.then(|| StreamConfig {
        chunk_ms: chunk_ms.unwrap_or(cfg.stream.chunk_ms),
        ..cfg.stream
    })
}

/// Input paths are recorded absolute so a manifest can be rerun from any
/// working directory.
fn absolute(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn resolve(command: Command, cfg: AppConfig) -> Result<(Invocation, PathBuf)> {
    Ok(match command {
        Command::SimulateForward {
            paths,
            steps,
            grid_points,
            x0,
            y,
            common,
        } => (
            Invocation::SimulateForward {
                request: ForwardRequest {
                    sde: cfg.sde,
                    paths,
                    steps,
                    grid_points,
                    x0,
                    y,
                    seed: common.seed.unwrap_or(0),
                },
            },
            common.out,
        ),
        Command::Synth { common } => {
            let mut data = cfg.data;
            if let Some(s) = common.seed {
                data.seed = s;
            }
            (Invocation::Synth { data }, common.out)
        }
        Command::Train { role, common } => {
            let mut config = cfg;
            if let Some(s) = common.seed {
                config.train.seed = s;
            }
            let role = match role {
                RoleArg::Score => ModelRole::Score,
                RoleArg::Denoiser => ModelRole::Denoiser,
            };
            (Invocation::Train { role, config }, common.out)
        }
        Command::Enhance {
            input,
            score,
            denoiser,
            guidance,
            streaming,
            chunk_ms,
            common,
        } => {
            let guidance = match (guidance.n_phi, guidance.t_phi) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage("--n-phi and --t-phi are mutually exclusive".into()))
                }
                (Some(n), None) => Guidance::NPhi(n),
                (None, Some(t)) => Guidance::TPhi(t),
                (None, None) => Guidance::NPhi(0),
            };
            (
                Invocation::Enhance {
                    input: absolute(input),
                    score: absolute(score),
                    denoiser: denoiser.map(absolute),
                    guidance,
                    stream: stream_config(&cfg, streaming, chunk_ms),
                    sampler: cfg.sampler,
                    sde: cfg.sde,
                    seed: common.seed.unwrap_or(cfg.sampler.seed),
                },
                common.out,
            )
        }
        Command::Sweep {
            score,
            denoiser,
            n_phi,
            seeds,
            streaming,
            chunk_ms,
            common,
        } => {
            let mut data = cfg.data.clone();
            if let Some(s) = common.seed {
                data.seed = s;
            }
            let n_phi = if n_phi.is_empty() {
                (0..=cfg.sde.n_steps).step_by(6).collect()
            } else {
                n_phi
            };
            (
                Invocation::Sweep {
                    score: absolute(score),
                    denoiser: absolute(denoiser),
                    data,
                    sde: cfg.sde,
                    sampler: cfg.sampler,
                    n_phi,
                    seeds,
                    stream: stream_config(&cfg, streaming, chunk_ms),
                },
                common.out,
            )
        }
        Command::Cost {
            n_phi,
            length,
            common,
        } => {
            let n_phi = if n_phi.is_empty() {
                (0..=cfg.sde.n_steps).collect()
            } else {
                n_phi
            };
            (
                Invocation::Cost {
                    request: CostRequest {
                        sde: cfg.sde,
                        corrector_steps: cfg.sampler.corrector_steps,
                        n_phi,
                        length,
                        score_net: cfg.score_net,
                        denoiser: cfg.denoiser,
                    },
                },
                common.out,
            )
        }
        Command::Serve { .. } | Command::Rerun { .. } => unreachable!("handled by the caller"),
    })
}

/// Artifacts of one executed command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Executes `inv`, writing its artifacts under `out`.
pub fn execute(inv: &Invocation, client: Option<&Client>, out: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let service = || client.ok_or_else(|| CliError::Usage("no service available".into()));
    let mut o = Outcome::default();
    match inv {
        Invocation::SimulateForward { request } => {
            let table = service()?.simulate_forward(request)?;
            let path = out.join("forward.csv");
            write(&path, table.to_csv())?;
            let worst = table
                .rows
                .iter()
                .map(|r| r.var_rel_err())
                .fold(0.0, f64::max);
            o.summary = json!({ "rows": table.rows.len(), "max_var_rel_err": worst });
            o.outputs.push(path);
        }
        Invocation::Synth { data } => {
            let pairs = data.test_set()?;
            for (i, p) in pairs.iter().enumerate() {
                for (name, samples) in [("clean", &p.clean), ("noisy", &p.noisy)] {
                    let path = out.join(format!("{name}_{i:03}.wav"));
                    write_wav(&path, &Signal::new(samples.clone(), data.sample_rate)?)?;
                    o.outputs.push(path);
                }
            }
            o.summary = json!({ "pairs": pairs.len(), "peak": INPUT_PEAK });
        }
        Invocation::Train { role, config } => {
            let result = service()?.train(&TrainRequest {
                role: *role,
                config: config.clone(),
            })?;
            let stem = match role {
                ModelRole::Score => "score",
                ModelRole::Denoiser => "denoiser",
            };
            let ck = out.join(format!("{stem}.json"));
            result.checkpoint.save(&ck)?;
            let csv = out.join(format!("{stem}_loss.csv"));
            result.loss.write_csv(&csv)?;
            let losses = &result.loss.losses;
            o.summary = json!({
                "steps": losses.len(),
                "first_loss": losses.first(),
                "last_loss": losses.last(),
                "parameters": result.checkpoint.params.len(),
            });
            o.outputs.extend([ck, csv]);
        }
        Invocation::Enhance {
            input,
            score,
            denoiser,
            guidance,
            stream,
            sampler,
            sde,
            seed,
        } => {
            let noisy = read_wav(input)?;
            let score_ck = Checkpoint::load(score)?;
            let den_ck = denoiser.as_deref().map(Checkpoint::load).transpose()?;
            o.inputs.push(input.clone());
            o.inputs.push(score.clone());
            o.inputs.extend(denoiser.clone());
            let client = service()?;
            let report = match stream {
                None => {
                    let res = client.enhance(&EnhanceRequest {
                        noisy: noisy.clone(),
                        score: score_ck,
                        denoiser: den_ck,
                        guidance: *guidance,
                        stream: None,
                        sampler: *sampler,
                        sde: *sde,
                        seed: *seed,
                    })?;
                    let path = out.join("enhanced.wav");
                    write_wav(&path, &res.enhanced)?;
                    o.outputs.push(path);
                    json!({
                        "n_phi": res.n_phi,
                        "t_phi": res.t_phi,
                        "ledger": res.ledger,
                        "gain": res.gain,
                        "streaming": false,
                        "wall_s": res.wall_s,
                        "rtf": res.wall_s / noisy.duration_s(),
                    })
                }
                Some(sc) => {
                    let (_, gain) = normalize_peak(noisy.samples(), INPUT_PEAK);
                    let opened = client.open_stream(&StreamOpenRequest {
                        score: score_ck,
                        denoiser: den_ck,
                        guidance: *guidance,
                        stream: *sc,
                        sampler: *sampler,
                        sde: *sde,
                        seed: *seed,
                        gain,
                    })?;
                    let mut enhanced = Vec::with_capacity(noisy.len());
                    for piece in noisy.samples().chunks(opened.chunk_size) {
                        client.push(&opened.id, piece)?;
                        while let Some(c) = client.pull(&opened.id)? {
                            enhanced.extend(c);
                        }
                    }
                    client.finish(&opened.id)?;
                    let summary = client.close(&opened.id)?;
                    for c in summary.unpulled {
                        enhanced.extend(c);
                    }
                    let path = out.join("enhanced.wav");
                    write_wav(&path, &Signal::new(enhanced, noisy.sample_rate())?)?;
                    o.outputs.push(path);
                    json!({
                        "n_phi": opened.n_phi,
                        "ledger": summary.ledger,
                        "gain": gain,
                        "streaming": true,
                        "chunk_size": opened.chunk_size,
                        "algorithmic_latency_ms": opened.algorithmic_latency_ms,
                        "chunks": summary.chunks,
                        "bank_states": summary.bank_states,
                        "rtf": summary.realtime_factor,
                    })
                }
            };
            let path = out.join("report.json");
            write(&path, to_json(&report))?;
            o.outputs.push(path);
            o.summary = report;
        }
        Invocation::Sweep {
            score,
            denoiser,
            data,
            sde,
            sampler,
            n_phi,
            seeds,
            stream,
        } => {
            let table = service()?.sweep(&SweepRequest {
                score: Checkpoint::load(score)?,
                denoiser: Checkpoint::load(denoiser)?,
                data: data.clone(),
                sde: *sde,
                sampler: *sampler,
                n_phi: n_phi.clone(),
                seeds: *seeds,
                stream: *stream,
            })?;
            o.inputs.extend([score.clone(), denoiser.clone()]);
            let csv = out.join("sweep.csv");
            write(&csv, table.to_csv())?;
            o.outputs.push(csv);
            o.summary = json!({
                "input_sdr_db": table.input_sdr_db,
                "denoiser_sdr_db": table.denoiser_sdr_db,
                "medians": table.medians,
            });
        }
        Invocation::Cost { request } => {
            let table = service()?.cost(request)?;
            let csv = out.join("cost.csv");
            write(&csv, table.to_csv())?;
            o.outputs.push(csv);
            o.summary = json!({ "rows": table.rows.len() });
        }
    }
    Ok(o)
}

/// An in-process service on a loopback port, stopped on drop.
pub struct EmbeddedServer {
    pub url: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl EmbeddedServer {
    pub fn start() -> Result<Self> {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = match tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
            {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = addr_tx.send(Err(e));
                    return;
                }
            };
            rt.block_on(async move {
                let loopback = SocketAddr::from(([127, 0, 0, 1], 0));
                match gse_server::spawn(loopback, gse_core::pipeline::threads_from_env()).await {
                    Ok(running) => {
                        let _ = addr_tx.send(Ok(running.addr));
                        let _ = stop_rx.await;
                        running.handle.abort();
                    }
                    Err(e) => {
                        let _ = addr_tx.send(Err(e));
                    }
                }
            });
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| CliError::Usage("embedded server thread exited".into()))?
            .map_err(|source| CliError::Io {
                path: PathBuf::from("127.0.0.1:0"),
                source,
            })?;
        Ok(Self {
            url: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        })
    }
}

impl Drop for EmbeddedServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(addr: SocketAddr) -> Result<()> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let rt = tokio::runtime::Runtime::new().map_err(io_err(Path::new("runtime")))?;
    rt.block_on(async {
        let running = gse_server::spawn(addr, gse_core::pipeline::threads_from_env())
            .await
            .map_err(|source| CliError::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            })?;
        eprintln!("listening on http://{}", running.addr);
        match running.handle.await {
            Ok(r) => r.map_err(|source| CliError::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            }),
            Err(e) => Err(CliError::Usage(e.to_string())),
        }
    })
}

/// Runs `inv` against `server` (or an embedded one) and writes the manifest.
pub fn run_invocation(inv: &Invocation, server: Option<&str>, out: &Path) -> Result<RunManifest> {
    let started = chrono::Utc::now();
    let mut embedded = None;
    let client = if inv.needs_service() {
        let url = match server {
            Some(u) => u.to_string(),
            None => {
                let e = EmbeddedServer::start()?;
                let url = e.url.clone();
                embedded = Some(e);
                url
            }
        };
        Some(Client::new(&url)?)
    } else {
        None
    };
    let outcome = execute(inv, client.as_ref(), out)?;
    drop(embedded);
    let manifest = RunManifest::new(inv.clone(), inv.seed(), out, outcome, started);
    manifest.save(&out.join(manifest::MANIFEST_FILE))?;
    Ok(manifest)
}

/// Parses `args` and runs the command.
pub fn main_with<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Serve { addr } => serve(addr),
        Command::Rerun { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let out = out.unwrap_or_else(|| m.out_dir.clone());
            let new = run_invocation(&m.invocation, cli.server.as_deref(), &out)?;
            println!("{}", to_json(&new.summary));
            Ok(())
        }
        command => {
            let (inv, out) = resolve(command, cfg)?;
            let m = run_invocation(&inv, cli.server.as_deref(), &out)?;
            println!("{}", to_json(&m.summary));
            Ok(())
        }
    }
}
