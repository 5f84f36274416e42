use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// Forward-pass and operation counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub score_net_forwards: u64,
    pub denoiser_forwards: u64,
    /// Multiply-accumulate operations of all network forwards.
    pub mac_total: u64,
    pub score_macs: u64,
    pub denoiser_macs: u64,
    /// Predictor steps that used the discriminative score.
    pub discriminative_steps: u64,
    /// Predictor steps that used the learned (or analytic) score.
    pub learned_steps: u64,
    /// Discriminative-score evaluations, predictor and corrector combined.
    pub discriminative_evals: u64,
    pub corrector_steps: u64,
    /// Corrector steps skipped because the score vanished.
    pub corrector_skips: u64,
}

impl CostLedger {
    pub fn record_score_forward(&mut self, macs: u64) {
        self.score_net_forwards += 1;
        self.score_macs += macs;
        self.mac_total += macs;
    }

    pub fn record_denoiser_forward(&mut self, macs: u64) {
        self.denoiser_forwards += 1;
        self.denoiser_macs += macs;
        self.mac_total += macs;
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, o: Self) {
        self.score_net_forwards += o.score_net_forwards;
        self.denoiser_forwards += o.denoiser_forwards;
        self.mac_total += o.mac_total;
        self.score_macs += o.score_macs;
        self.denoiser_macs += o.denoiser_macs;
        self.discriminative_steps += o.discriminative_steps;
        self.learned_steps += o.learned_steps;
        self.discriminative_evals += o.discriminative_evals;
        self.corrector_steps += o.corrector_steps;
        self.corrector_skips += o.corrector_skips;
    }
}
