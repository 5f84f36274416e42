//! The score network and the discriminative denoiser.
//!
//! Both share one framewise recurrent core: an affine+tanh encoder applied
//! to each frame, a gated memory cell carried from frame to frame (and from
//! chunk to chunk through the caller's state), and an affine decoder that
//! sees the encoder features and the new memory. Processing is causal at
//! frame granularity, so running two chunks back to back with the state
//! threaded through is identical to running their concatenation.

use serde::{Deserialize, Serialize};

use super::layers::{Affine, CellCache, GatedCell};
use crate::error::{check_same_len, Error, Result};
use crate::rng::RandomSource;
use crate::score::{DenoiserModel, HistoryState, ScoreModel};
use crate::sde::SdeParams;

#[derive(Debug, Clone)]
pub struct RecurrentCore {
    pub frame: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub encoder: Affine,
    pub cell: GatedCell,
    pub decoder: Affine,
}

#[derive(Debug, Clone, Default)]
pub struct FrameCache {
    input: Vec<f64>,
    enc: Vec<f64>,
    cell: CellCache,
    dec_in: Vec<f64>,
}

impl RecurrentCore {
    pub fn new(frame: usize, input_dim: usize, hidden: usize) -> Self {
        let encoder = Affine::new(input_dim, hidden, 0);
        let cell = GatedCell::new(hidden, hidden, encoder.end());
        let decoder = Affine::new(2 * hidden, frame, cell.end());
        Self {
            frame,
            input_dim,
            hidden,
            encoder,
            cell,
            decoder,
        }
    }

    pub fn n_params(&self) -> usize {
        self.decoder.end()
    }

    pub fn macs_per_frame(&self) -> u64 {
        self.encoder.macs() + self.cell.macs() + self.decoder.macs()
    }

    pub fn init(&self, params: &mut [f64], rng: &mut RandomSource) {
        self.encoder.init(params, rng, 1.0);
        self.cell.init(params, rng);
        self.decoder.init(params, rng, 0.1);
    }

    /// Runs all frames of `inputs` (`n_frames * input_dim`) from state `h0`.
    /// Returns the stacked outputs and the final state; fills `caches` for
    /// a later [`backward`](Self::backward) when given.
    pub fn forward(
        &self,
        params: &[f64],
        inputs: &[f64],
        h0: &[f64],
        mut caches: Option<&mut Vec<FrameCache>>,
    ) -> (Vec<f64>, Vec<f64>) {
        let n_frames = inputs.len() / self.input_dim;
        let mut out = vec![0.0; n_frames * self.frame];
        let mut h = h0.to_vec();
        let mut h_next = vec![0.0; self.hidden];
        let mut enc = vec![0.0; self.hidden];
        let mut dec_in = vec![0.0; 2 * self.hidden];
        for (u, o) in inputs
            .chunks_exact(self.input_dim)
            .zip(out.chunks_exact_mut(self.frame))
        {
            self.encoder.forward(params, u, &mut enc);
            enc.iter_mut().for_each(|v| *v = v.tanh());
            let cell_cache = self.cell.step(params, &enc, &h, &mut h_next);
            dec_in[..self.hidden].copy_from_slice(&enc);
            dec_in[self.hidden..].copy_from_slice(&h_next);
            self.decoder.forward(params, &dec_in, o);
            std::mem::swap(&mut h, &mut h_next);
            if let Some(c) = caches.as_deref_mut() {
                c.push(FrameCache {
                    input: u.to_vec(),
                    enc: enc.clone(),
                    cell: cell_cache,
                    dec_in: dec_in.clone(),
                });
            }
        }
        (out, h)
    }

    /// Backpropagation through time. `d_out` matches the forward output;
    /// the final state is treated as a free end (zero gradient). Returns
    /// the gradient with respect to `h0` and, if requested, writes the
    /// input gradients.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        caches: &[FrameCache],
        d_out: &[f64],
        mut d_inputs: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let hd = self.hidden;
        let mut dh = vec![0.0; hd];
        let mut d_dec_in = vec![0.0; 2 * hd];
        for (f, cache) in caches.iter().enumerate().rev() {
            let d_o = &d_out[f * self.frame..(f + 1) * self.frame];
            d_dec_in.iter_mut().for_each(|v| *v = 0.0);
            self.decoder
                .backward(params, grads, &cache.dec_in, d_o, Some(&mut d_dec_in));
            let mut d_enc = d_dec_in[..hd].to_vec();
            let dh_next: Vec<f64> = d_dec_in[hd..].iter().zip(&dh).map(|(a, b)| a + b).collect();
            let mut dh_prev = vec![0.0; hd];
            self.cell
                .step_backward(params, grads, &cache.cell, &dh_next, &mut d_enc, &mut dh_prev);
            for (d, e) in d_enc.iter_mut().zip(&cache.enc) {
                *d *= 1.0 - e * e;
            }
            let d_u = d_inputs
                .as_deref_mut()
                .map(|di| &mut di[f * self.input_dim..(f + 1) * self.input_dim]);
            self.encoder.backward(params, grads, &cache.input, &d_enc, d_u);
            dh = dh_prev;
        }
        dh
    }
}

/// Sinusoidal features of the diffusion time on a geometric frequency ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub frequencies: Vec<f64>,
}

impl TimeEmbedding {
    pub fn new(dim: usize) -> Self {
        let half = (dim / 2).max(1);
        let (lo, hi) = (0.5f64, 50.0f64);
        let frequencies = (0..half)
            .map(|k| {
                let frac = if half == 1 { 0.0 } else { k as f64 / (half - 1) as f64 };
                lo * (hi / lo).powf(frac)
            })
            .collect();
        Self { dim, frequencies }
    }

    pub fn embed_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (k, w) in self.frequencies.iter().enumerate() {
            if 2 * k < self.dim {
                out[2 * k] = (w * t).sin();
            }
            if 2 * k + 1 < self.dim {
                out[2 * k + 1] = (w * t).cos();
            }
        }
    }

    pub fn embed(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.embed_into(t, &mut out);
        out
    }
}

/// How the raw network output `F` becomes a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOutput {
    /// `s = -F / sigma(t)`: the network predicts the injected noise.
    NoisePrediction,
    /// `s = -r / v(t) - a sigma_d / (sigma(t) sqrt(v(t))) F` with
    /// `r = x_t - (1 - a) y`, `a = e^{-gamma t}` and
    /// `v = a^2 sigma_d^2 + sigma(t)^2`: the exact score of a
    /// `N(0, sigma_d^2)` clean signal plus a learned correction.
    Preconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreNetConfig {
    pub frame_size: usize,
    pub hidden: usize,
    pub time_dim: usize,
    /// Nominal clean-signal standard deviation used by the preconditioner.
    pub sigma_data: f64,
    pub output: ScoreOutput,
    pub sde: SdeParams,
}

impl Default for ScoreNetConfig {
    fn default() -> Self {
        Self {
            frame_size: 40,
            hidden: 48,
            time_dim: 32,
            sigma_data: 0.3,
            output: ScoreOutput::Preconditioned,
            sde: SdeParams::default(),
        }
    }
}

/// Per-time scalars mapping inputs and raw output to a score.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OutputScaling {
    pub(crate) decay: f64,
    pub(crate) c_in: f64,
    /// Coefficient on the residual `r`.
    pub(crate) skip: f64,
    /// Coefficient on the network output.
    pub(crate) out: f64,
}

#[derive(Debug, Clone)]
pub struct ScoreNet {
    pub config: ScoreNetConfig,
    pub core: RecurrentCore,
    pub embedding: TimeEmbedding,
    pub params: Vec<f64>,
}

impl ScoreNet {
    pub fn new(config: ScoreNetConfig, seed: u64) -> Result<Self> {
        if config.frame_size == 0 || config.hidden == 0 {
            return Err(Error::Config("frame_size and hidden must be positive".into()));
        }
        if config.sigma_data.is_nan() || config.sigma_data <= 0.0 {
            return Err(Error::Config("sigma_data must be positive".into()));
        }
        config.sde.validate()?;
        let core = RecurrentCore::new(
            config.frame_size,
            2 * config.frame_size + config.time_dim,
            config.hidden,
        );
        let mut params = vec![0.0; core.n_params()];
        core.init(&mut params, &mut RandomSource::new(seed));
        Ok(Self {
            embedding: TimeEmbedding::new(config.time_dim),
            config,
            core,
            params,
        })
    }

    pub fn with_params(config: ScoreNetConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::Config(format!(
                "score net expects {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the decoder, the last affine block.
    pub fn zero_output_layer(&mut self) {
        self.core.decoder.zero(&mut self.params);
    }

    pub(crate) fn scaling(&self, t: f64) -> Result<OutputScaling> {
        let sde = &self.config.sde;
        if !(t > 0.0 && t <= sde.t_max) {
            return Err(Error::Domain(format!("score net evaluated at t = {t}")));
        }
        let a = sde.decay(t);
        let var = sde.var(t);
        if var <= 0.0 {
            return Err(Error::Domain(format!("sigma(t) = 0 at t = {t}")));
        }
        let sigma = var.sqrt();
        let sd = self.config.sigma_data;
        let v = a * a * sd * sd + var;
        Ok(match self.config.output {
            ScoreOutput::NoisePrediction => OutputScaling {
                decay: a,
                c_in: 1.0 / v.sqrt(),
                skip: 0.0,
                out: -1.0 / sigma,
            },
            ScoreOutput::Preconditioned => OutputScaling {
                decay: a,
                c_in: 1.0 / v.sqrt(),
                skip: -1.0 / v,
                out: -a * sd / (sigma * v.sqrt()),
            },
        })
    }

    fn check_input(&self, x_t: &[f64], y: &[f64]) -> Result<()> {
        check_same_len("score net (x_t, y)", x_t.len(), y.len())?;
        if x_t.is_empty() || !x_t.len().is_multiple_of(self.config.frame_size) {
            return Err(Error::Dimension(format!(
                "length {} is not a positive multiple of frame size {}",
                x_t.len(),
                self.config.frame_size
            )));
        }
        Ok(())
    }

    /// Builds the per-frame input rows and the residual `r`.
    pub(crate) fn inputs(&self, x_t: &[f64], y: &[f64], t: f64, sc: &OutputScaling) -> (Vec<f64>, Vec<f64>) {
        let fs = self.config.frame_size;
        let td = self.config.time_dim;
        let r: Vec<f64> = x_t
            .iter()
            .zip(y)
            .map(|(x, yi)| x - (1.0 - sc.decay) * yi)
            .collect();
        let emb = self.embedding.embed(t);
        let n_frames = x_t.len() / fs;
        let row = 2 * fs + td;
        let mut inputs = vec![0.0; n_frames * row];
        for (f, u) in inputs.chunks_exact_mut(row).enumerate() {
            let span = f * fs..(f + 1) * fs;
            for (dst, src) in u[..fs].iter_mut().zip(&r[span.clone()]) {
                *dst = sc.c_in * src;
            }
            u[fs..2 * fs].copy_from_slice(&y[span]);
            u[2 * fs..].copy_from_slice(&emb);
        }
        (inputs, r)
    }

    /// Score and next state, optionally with caches for backprop.
    pub(crate) fn forward_cached(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        state: &[f64],
        caches: Option<&mut Vec<FrameCache>>,
    ) -> Result<(Vec<f64>, HistoryState, OutputScaling)> {
        self.check_input(x_t, y)?;
        check_same_len("score net state", state.len(), self.config.hidden)?;
        let sc = self.scaling(t)?;
        let (inputs, r) = self.inputs(x_t, y, t, &sc);
        let (raw, h) = self.core.forward(&self.params, &inputs, state, caches);
        let score = raw
            .iter()
            .zip(&r)
            .map(|(f, ri)| sc.skip * ri + sc.out * f)
            .collect();
        Ok((score, h, sc))
    }

    pub fn forward_score(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        state: &[f64],
    ) -> Result<(Vec<f64>, HistoryState)> {
        let (s, h, _) = self.forward_cached(x_t, y, t, state, None)?;
        Ok((s, h))
    }
}

impl ScoreModel for ScoreNet {
    fn state_dim(&self) -> usize {
        self.config.hidden
    }

    fn macs_per_forward(&self, len: usize) -> u64 {
        (len / self.config.frame_size) as u64 * self.core.macs_per_frame()
    }

    fn score(
        &self,
        x_t: &[f64],
        y: &[f64],
        t: f64,
        state: &[f64],
    ) -> Result<(Vec<f64>, HistoryState)> {
        self.forward_score(x_t, y, t, state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub frame_size: usize,
    pub hidden: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            frame_size: 40,
            hidden: 48,
        }
    }
}

/// Discriminative enhancer `x_hat = y + D(y)` on the shared recurrent core.
#[derive(Debug, Clone)]
pub struct DenoiserNet {
    pub config: DenoiserConfig,
    pub core: RecurrentCore,
    pub params: Vec<f64>,
}

impl DenoiserNet {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        if config.frame_size == 0 || config.hidden == 0 {
            return Err(Error::Config("frame_size and hidden must be positive".into()));
        }
        let core = RecurrentCore::new(config.frame_size, config.frame_size, config.hidden);
        let mut params = vec![0.0; core.n_params()];
        core.init(&mut params, &mut RandomSource::new(seed));
        Ok(Self {
            config,
            core,
            params,
        })
    }

    pub fn with_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::Config(format!(
                "denoiser expects {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn forward_cached(
        &self,
        y: &[f64],
        state: &[f64],
        caches: Option<&mut Vec<FrameCache>>,
    ) -> Result<(Vec<f64>, HistoryState)> {
        if y.is_empty() || !y.len().is_multiple_of(self.config.frame_size) {
            return Err(Error::Dimension(format!(
                "length {} is not a positive multiple of frame size {}",
                y.len(),
                self.config.frame_size
            )));
        }
        check_same_len("denoiser state", state.len(), self.config.hidden)?;
        let (mut out, h) = self.core.forward(&self.params, y, state, caches);
        for (o, yi) in out.iter_mut().zip(y) {
            *o += yi;
        }
        Ok((out, h))
    }
}

impl DenoiserModel for DenoiserNet {
    fn state_dim(&self) -> usize {
        self.config.hidden
    }

    fn macs_per_forward(&self, len: usize) -> u64 {
        (len / self.config.frame_size) as u64 * self.core.macs_per_frame()
    }

    fn denoise(&self, y: &[f64], state: &[f64]) -> Result<(Vec<f64>, HistoryState)> {
        self.forward_cached(y, state, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradient;

    fn small_score_net(output: ScoreOutput) -> ScoreNet {
        ScoreNet::new(
            ScoreNetConfig {
                frame_size: 4,
                hidden: 5,
                time_dim: 6,
                output,
                ..Default::default()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_output_layer_gives_zero_noise_prediction_score() {
        let mut net = small_score_net(ScoreOutput::NoisePrediction);
        net.zero_output_layer();
        let mut rng = RandomSource::new(0);
        let x = rng.normal_vec(12);
        let y = rng.normal_vec(12);
        let (s, _) = net.forward_score(&x, &y, 0.7, &[0.3; 5]).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));

        // the preconditioned head falls back to its Gaussian skip term
        let mut pre = small_score_net(ScoreOutput::Preconditioned);
        pre.zero_output_layer();
        let (s, _) = pre.forward_score(&x, &y, 0.7, &[0.0; 5]).unwrap();
        let sc = pre.scaling(0.7).unwrap();
        for ((si, xi), yi) in s.iter().zip(&x).zip(&y) {
            let r = xi - (1.0 - sc.decay) * yi;
            assert_eq!(*si, sc.skip * r);
        }
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let net = ScoreNet::new(ScoreNetConfig::default(), 1).unwrap();
        let mut rng = RandomSource::new(2);
        for len in [800, 1600, 4000] {
            let x = rng.normal_vec(len);
            let y = rng.normal_vec(len);
            let state = vec![0.0; net.config.hidden];
            let (a, ha) = net.forward_score(&x, &y, 0.4, &state).unwrap();
            let (b, hb) = net.forward_score(&x, &y, 0.4, &state).unwrap();
            assert_eq!(a.len(), len);
            assert_eq!(a, b);
            assert_eq!(ha, hb);
        }
        let bad = net.forward_score(&[0.0; 30], &[0.0; 30], 0.4, &vec![0.0; 48]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn chunked_forward_equals_concatenated_forward() {
        let net = ScoreNet::new(ScoreNetConfig::default(), 4).unwrap();
        let den = DenoiserNet::new(DenoiserConfig::default(), 5).unwrap();
        let mut rng = RandomSource::new(6);
        let x = rng.normal_vec(1600);
        let y = rng.normal_vec(1600);
        let h0 = vec![0.0; 48];
        let (whole, h_whole) = net.forward_score(&x, &y, 0.8, &h0).unwrap();
        let (first, h1) = net.forward_score(&x[..800], &y[..800], 0.8, &h0).unwrap();
        let (second, h2) = net.forward_score(&x[800..], &y[800..], 0.8, &h1).unwrap();
        assert_eq!(&whole[..800], &first[..]);
        assert_eq!(&whole[800..], &second[..]);
        assert_eq!(h_whole, h2);

        let (dw, _) = den.denoise(&y, &h0).unwrap();
        let (d1, s1) = den.denoise(&y[..800], &h0).unwrap();
        let (d2, _) = den.denoise(&y[800..], &s1).unwrap();
        assert_eq!(&dw[..800], &d1[..]);
        assert_eq!(&dw[800..], &d2[..]);
    }

    #[test]
    fn mac_count_matches_layer_shapes() {
        let net = ScoreNet::new(ScoreNetConfig::default(), 0).unwrap();
        let (f, h, e) = (40u64, 48u64, 32u64);
        let per_frame = (2 * f + e) * h + 2 * (2 * h * h) + 2 * h * f;
        assert_eq!(net.macs_per_forward(800), 20 * per_frame);
        let den = DenoiserNet::new(DenoiserConfig::default(), 0).unwrap();
        assert_eq!(den.macs_per_forward(800), 20 * (f * h + 4 * h * h + 2 * h * f));
    }

    #[test]
    fn recurrent_core_gradients_match_finite_differences() {
        let core = RecurrentCore::new(3, 5, 4);
        let mut rng = RandomSource::new(21);
        let mut params = vec![0.0; core.n_params()];
        core.init(&mut params, &mut rng);
        params.iter_mut().for_each(|p| *p += 0.2 * rng.normal());
        let inputs = rng.normal_vec(4 * 5);
        let h0: Vec<f64> = rng.normal_vec(4).iter().map(|v| 0.3 * v).collect();
        let proj = rng.normal_vec(4 * 3);
        let loss = |p: &[f64], u: &[f64], h: &[f64]| {
            let (out, _) = core.forward(p, u, h, None);
            out.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut caches = Vec::new();
        core.forward(&params, &inputs, &h0, Some(&mut caches));
        let mut grads = vec![0.0; params.len()];
        let mut d_in = vec![0.0; inputs.len()];
        let dh0 = core.backward(&params, &mut grads, &caches, &proj, Some(&mut d_in));
        check_gradient(&params, &grads, 50, &mut rng, |p| loss(p, &inputs, &h0)).assert_below(1e-4);
        check_gradient(&inputs, &d_in, 50, &mut rng, |u| loss(&params, u, &h0)).assert_below(1e-4);
        check_gradient(&h0, &dh0, 4, &mut rng, |h| loss(&params, &inputs, h)).assert_below(1e-4);
    }

    #[test]
    fn time_embedding_is_deterministic() {
        let e = TimeEmbedding::new(32);
        assert_eq!(e.embed(0.3).len(), 32);
        assert_eq!(e.embed(0.3), e.embed(0.3));
        assert_ne!(e.embed(0.3), e.embed(0.31));
    }
}
