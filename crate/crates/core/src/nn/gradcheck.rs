//! Central finite-difference gradient checks.

use crate::rng::RandomSource;

/// Worst relative error found by [`check_gradient`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub probes: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    #[track_caller]
    pub fn assert_below(&self, tol: f64) {
        assert!(
            self.passes(tol),
            "gradient check failed: rel error {:.3e} at index {} over {} probes",
            self.max_rel_error,
            self.worst_index,
            self.probes
        );
    }
}

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Compare `analytic` against central differences of `f` at `probes`
/// randomly chosen coordinates of `x` (all coordinates if `probes >= len`).
///
/// The relative error is `|a - n| / max(|a|, |n|, floor)` where the floor
/// `1e-6 * (1 + |f(x)|)` keeps coordinates with a vanishing gradient from
/// dividing by zero.
pub fn check_gradient(
    x: &[f64],
    analytic: &[f64],
    probes: usize,
    rng: &mut RandomSource,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradCheck {
    assert_eq!(x.len(), analytic.len());
    let indices: Vec<usize> = if probes >= x.len() {
        (0..x.len()).collect()
    } else {
        (0..probes).map(|_| rng.index(x.len())).collect()
    };
    let f0 = f(x).abs();
    let floor = 1e-6 * (1.0 + f0);
    let mut xp = x.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        probes: indices.len(),
    };
    for &i in &indices {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let fp = f(&xp);
        xp[i] = orig - FD_STEP;
        let fm = f(&xp);
        xp[i] = orig;
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > worst.max_rel_error {
            worst.max_rel_error = rel;
            worst.worst_index = i;
        }
    }
    worst
}
