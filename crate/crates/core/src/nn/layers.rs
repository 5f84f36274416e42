//! Parameter-slice layers with hand-written backward passes.
//!
//! Layers do not own weights. Each one records an offset into a flat
//! parameter vector so that a whole network is one `Vec<f64>` for the
//! optimizer and the checkpoint.

/// `out = W x + b` with `W` row-major `out_dim x in_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub in_dim: usize,
    pub out_dim: usize,
    pub offset: usize,
}

impl Affine {
    pub fn new(in_dim: usize, out_dim: usize, offset: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn end(&self) -> usize {
        self.offset + self.n_params()
    }

    pub fn macs(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }

    fn weights<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let w_end = self.offset + self.in_dim * self.out_dim;
        (&params[self.offset..w_end], &params[w_end..self.end()])
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        let (w, b) = self.weights(params);
        for ((o, row), bi) in out.iter_mut().zip(w.chunks_exact(self.in_dim)).zip(b) {
            *o = bi + dot(row, x);
        }
    }

    /// Accumulates weight gradients into `grads` and, if given, the input
    /// gradient into `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        x: &[f64],
        dout: &[f64],
        dx: Option<&mut [f64]>,
    ) {
        let w_end = self.offset + self.in_dim * self.out_dim;
        {
            let (gw, gb) = grads[self.offset..self.end()].split_at_mut(w_end - self.offset);
            for ((grow, d), gbi) in gw.chunks_exact_mut(self.in_dim).zip(dout).zip(gb) {
                *gbi += d;
                if *d != 0.0 {
                    axpy(*d, x, grow);
                }
            }
        }
        if let Some(dx) = dx {
            let (w, _) = self.weights(params);
            for (row, d) in w.chunks_exact(self.in_dim).zip(dout) {
                if *d != 0.0 {
                    axpy(*d, row, dx);
                }
            }
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(&self, params: &mut [f64], rng: &mut crate::rng::RandomSource, gain: f64) {
        let limit = gain * (6.0 / (self.in_dim + self.out_dim) as f64).sqrt();
        let w_end = self.offset + self.in_dim * self.out_dim;
        for w in &mut params[self.offset..w_end] {
            *w = rng.uniform(-limit, limit);
        }
        for b in &mut params[w_end..self.end()] {
            *b = 0.0;
        }
    }

    pub fn zero(&self, params: &mut [f64]) {
        params[self.offset..self.end()].iter_mut().for_each(|v| *v = 0.0);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the loop vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gated recurrent memory cell:
///
/// ```text
/// u  = [x; h]
/// g  = sigmoid(W_g u + b_g)
/// c  = tanh(W_c u + b_c)
/// h' = (1 - g) * h + g * c
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedCell {
    pub in_dim: usize,
    pub hidden: usize,
    pub gate: Affine,
    pub cand: Affine,
}

#[derive(Debug, Clone, Default)]
pub struct CellCache {
    u: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
}

impl GatedCell {
    pub fn new(in_dim: usize, hidden: usize, offset: usize) -> Self {
        let gate = Affine::new(in_dim + hidden, hidden, offset);
        let cand = Affine::new(in_dim + hidden, hidden, gate.end());
        Self {
            in_dim,
            hidden,
            gate,
            cand,
        }
    }

    pub fn end(&self) -> usize {
        self.cand.end()
    }

    pub fn macs(&self) -> u64 {
        self.gate.macs() + self.cand.macs()
    }

    pub fn step(&self, params: &[f64], x: &[f64], h: &[f64], h_next: &mut [f64]) -> CellCache {
        let mut u = Vec::with_capacity(self.in_dim + self.hidden);
        u.extend_from_slice(x);
        u.extend_from_slice(h);
        let mut g = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        self.gate.forward(params, &u, &mut g);
        self.cand.forward(params, &u, &mut c);
        for i in 0..self.hidden {
            g[i] = sigmoid(g[i]);
            c[i] = c[i].tanh();
            h_next[i] = (1.0 - g[i]) * h[i] + g[i] * c[i];
        }
        CellCache { u, g, c }
    }

    /// Given `dh_next`, accumulates parameter gradients and adds the input
    /// and previous-state gradients to `dx` and `dh`.
    pub fn step_backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        cache: &CellCache,
        dh_next: &[f64],
        dx: &mut [f64],
        dh: &mut [f64],
    ) {
        let h = &cache.u[self.in_dim..];
        let mut da_g = vec![0.0; self.hidden];
        let mut da_c = vec![0.0; self.hidden];
        for i in 0..self.hidden {
            let (g, c) = (cache.g[i], cache.c[i]);
            let d = dh_next[i];
            dh[i] += d * (1.0 - g);
            da_g[i] = d * (c - h[i]) * g * (1.0 - g);
            da_c[i] = d * g * (1.0 - c * c);
        }
        let mut du = vec![0.0; self.in_dim + self.hidden];
        self.gate.backward(params, grads, &cache.u, &da_g, Some(&mut du));
        self.cand.backward(params, grads, &cache.u, &da_c, Some(&mut du));
        axpy(1.0, &du[..self.in_dim], dx);
        axpy(1.0, &du[self.in_dim..], dh);
    }

    pub fn init(&self, params: &mut [f64], rng: &mut crate::rng::RandomSource) {
        self.gate.init(params, rng, 1.0);
        self.cand.init(params, rng, 1.0);
    }
}
