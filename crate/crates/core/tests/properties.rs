use gse_core::audio::{lsd, sdr_db, synthesize_pair, CleanKind, MixSpec, NoiseKind};
use gse_core::nn::{DenoiserConfig, DenoiserNet, ScoreNet, ScoreNetConfig};
use gse_core::score::{
    analytic_gaussian_score, discriminative_score, n_phi_from_t_phi, t_phi_from_n_phi, AnalyticScore,
    GaussianPrior0,
};
use gse_core::sde::{mean, perturb_with};
use gse_core::streaming::{enhance_stream, process_chunk, HistoryBank, Provider, StreamConfig};
use gse_core::{
    reverse_process, CostLedger, DenoiserModel, Guide, GuidanceSchedule, RandomSource, SamplerConfig,
    ScoreModel, SdeParams, Signal,
};
use proptest::prelude::*;

fn sde() -> impl Strategy<Value = SdeParams> {
    (0.5f64..3.0, 1e-5f64..1e-3, 2.0f64..2000.0, 1usize..60).prop_map(|(gamma, smin, ratio, n)| SdeParams {
        gamma,
        sigma_min: smin,
        sigma_max: smin * ratio,
        n_steps: n,
        ..SdeParams::default()
    })
}

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn small_score_net(seed: u64) -> ScoreNet {
    let cfg = ScoreNetConfig {
        frame_size: 4,
        hidden: 6,
        time_dim: 8,
        ..Default::default()
    };
    ScoreNet::new(cfg, seed).unwrap()
}

fn small_denoiser(seed: u64) -> DenoiserNet {
    DenoiserNet::new(DenoiserConfig { frame_size: 4, hidden: 6 }, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_solves_its_lyapunov_equation(p in sde(), t in 0.05f64..0.999) {
        let h = 1e-5;
        let fd = (p.variance(t + h).unwrap() - p.variance(t - h).unwrap()) / (2.0 * h);
        let g = p.diffusion_coeff(t).unwrap();
        let rhs = -2.0 * p.gamma * p.variance(t).unwrap() + g * g;
        prop_assert!((fd - rhs).abs() <= 1e-3 * rhs.abs(), "fd {fd} rhs {rhs}");
    }

    #[test]
    fn variance_is_nonnegative_and_starts_at_zero(p in sde(), t in 0.0f64..1.0) {
        prop_assert_eq!(p.variance(0.0).unwrap(), 0.0);
        prop_assert!(p.variance(t).unwrap() >= 0.0);
    }

    #[test]
    fn mean_is_a_convex_combination(p in sde(), x0 in vec_of(8), y in vec_of(8), t in 0.0f64..1.0) {
        let m = mean(&x0, &y, t, &p).unwrap();
        for ((mi, a), b) in m.iter().zip(&x0).zip(&y) {
            prop_assert!(*mi >= a.min(*b) - 1e-15 && *mi <= a.max(*b) + 1e-15);
        }
    }

    #[test]
    fn mean_relaxes_monotonically_toward_y(p in sde(), x0 in vec_of(8), y in vec_of(8), t in 0.0f64..0.99, dt in 0.0f64..0.01) {
        let dist = |t: f64| {
            mean(&x0, &y, t, &p).unwrap().iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        prop_assert!(dist(t + dt) <= dist(t) + 1e-15);
    }

    #[test]
    fn oracle_denoiser_gives_the_true_score(p in sde(), x0 in vec_of(16), y in vec_of(16), z in prop::collection::vec(-4.0f64..4.0, 16), u in 0.0f64..1.0) {
        let t = p.t_eps + u * (p.t_max - p.t_eps);
        let (x_t, z) = perturb_with(&x0, &y, t, &p, z).unwrap();
        let s = discriminative_score(&x_t, &y, t, &x0, &p).unwrap();
        let sigma = p.variance(t).unwrap().sqrt();
        let m = mean(&x0, &y, t, &p).unwrap();
        for (i, (si, zi)) in s.iter().zip(&z).enumerate() {
            // bound for rounding in (mean - x_t) / sigma^2
            let tol = 1e-12 + 4.0 * f64::EPSILON * (m[i].abs() + x_t[i].abs()) / (sigma * sigma);
            prop_assert!((si + zi / sigma).abs() <= tol, "{} vs {}", si, -zi / sigma);
        }
    }

    #[test]
    fn analytic_score_is_linear_with_the_marginal_slope(p in sde(), m0 in -1.0f64..1.0, y in -1.0f64..1.0, var0 in 1e-3f64..1.0, t in 0.0f64..1.0, x in -2.0f64..2.0) {
        let prior = GaussianPrior0::new(vec![m0], var0).unwrap();
        let s = |x: f64| analytic_gaussian_score(&[x], &[y], t, &prior, &p).unwrap()[0];
        let expected = -1.0 / ((-2.0 * p.gamma * t).exp() * var0 + p.variance(t).unwrap());
        let slope = s(x + 1.0) - s(x);
        prop_assert!((slope - expected).abs() <= 1e-9 * expected.abs());
    }

    #[test]
    fn n_phi_counts_grid_points_above_t_phi(p in sde(), t_phi in 0.0f64..1.2) {
        let n = n_phi_from_t_phi(t_phi, &p);
        let expected = (1..=p.n_steps).filter(|&k| p.t_max * k as f64 / p.n_steps as f64 > t_phi).count();
        // tolerance only matters for t_phi within 1e-12 of a grid point
        prop_assert!(n == expected || (n as i64 - expected as i64).abs() == 1);
        if t_phi >= p.t_max {
            prop_assert_eq!(n, 0);
        }
        if t_phi < p.dt() {
            prop_assert_eq!(n, p.n_steps);
        }
    }

    #[test]
    fn n_phi_round_trips_through_t_phi(p in sde(), k in 0usize..60) {
        let k = k.min(p.n_steps);
        prop_assert_eq!(n_phi_from_t_phi(t_phi_from_n_phi(k, &p), &p), k);
        prop_assert_eq!(GuidanceSchedule::from_n_phi(k, &p).unwrap().n_phi, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_matches_the_step_partition(n in 1usize..25, k in 0usize..25, correctors in 0usize..3, seed in any::<u64>()) {
        let p = SdeParams::default().with_steps(n);
        let k = k.min(n);
        let net = small_score_net(1);
        let den = small_denoiser(2);
        let y: Vec<f64> = (0..8).map(|i| 0.3 * (i as f64).sin()).collect();
        let schedule = GuidanceSchedule::from_n_phi(k, &p).unwrap();
        let cfg = SamplerConfig { corrector_steps: correctors, ..Default::default() };
        let (_, l) = reverse_process(&y, &net, Guide::Denoiser(&den), schedule, &cfg, &p, &mut RandomSource::new(seed)).unwrap();
        prop_assert_eq!(l.discriminative_steps, k as u64);
        prop_assert_eq!(l.learned_steps, (n - k) as u64);
        prop_assert_eq!(l.score_net_forwards, ((1 + correctors) * (n - k)) as u64);
        prop_assert_eq!(l.denoiser_forwards, u64::from(k > 0));
        prop_assert_eq!(l.score_macs, l.score_net_forwards * net.macs_per_forward(8));
        prop_assert_eq!(l.mac_total, l.score_macs + l.denoiser_macs);
    }

    #[test]
    fn sampler_is_deterministic_in_its_seed(seed in any::<u64>(), k in 0usize..30) {
        let p = SdeParams::default();
        let net = small_score_net(3);
        let den = small_denoiser(4);
        let y: Vec<f64> = (0..12).map(|i| 0.2 * (0.7 * i as f64).cos()).collect();
        let schedule = GuidanceSchedule::from_n_phi(k, &p).unwrap();
        let run = || reverse_process(&y, &net, Guide::Denoiser(&den), schedule, &SamplerConfig::default(), &p, &mut RandomSource::new(seed)).unwrap();
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn chunked_score_forward_equals_concatenated(split in 1usize..6, seed in any::<u64>()) {
        let net = small_score_net(seed % 97);
        let mut rng = RandomSource::new(seed);
        let x = rng.normal_vec(24);
        let y = rng.normal_vec(24);
        let h0 = vec![0.0; net.state_dim()];
        let (whole, h_whole) = net.forward_score(&x, &y, 0.4, &h0).unwrap();
        let cut = 4 * split;
        let (a, h_a) = net.forward_score(&x[..cut], &y[..cut], 0.4, &h0).unwrap();
        let (b, h_b) = net.forward_score(&x[cut..], &y[cut..], 0.4, &h_a).unwrap();
        prop_assert_eq!([a, b].concat(), whole);
        prop_assert_eq!(h_b, h_whole);
    }

    #[test]
    fn stream_bank_keeps_its_shape_and_ledgers_add(chunks in 1usize..5, k in 0usize..6, seed in any::<u64>()) {
        let p = SdeParams::default().with_steps(5);
        let net = small_score_net(5);
        let den = small_denoiser(6);
        let provider = Provider { score: &net, denoiser: Some(&den) };
        let stream = StreamConfig { chunk_ms: 1.0, sample_rate: 8000 };
        let schedule = GuidanceSchedule::from_n_phi(k.min(5), &p).unwrap();
        let cfg = SamplerConfig::default();
        let mut bank = HistoryBank::for_models(&provider, &p, &stream);
        let mut total = CostLedger::default();
        let mut rng = RandomSource::new(seed);
        for c in 0..chunks {
            let y = rng.normal_vec(8).iter().map(|v| 0.1 * v).collect::<Vec<_>>();
            let mut part = CostLedger::default();
            let mut noise = RandomSource::with_stream(seed, c as u64);
            process_chunk(&y, &mut bank, &provider, schedule, &cfg, &p, &mut noise, &mut part).unwrap();
            prop_assert_eq!(bank.len(), 5);
            prop_assert!(bank.score_states().iter().all(|s| s.len() == net.state_dim()));
            total += part;
        }
        let single = {
            let mut b = HistoryBank::for_models(&provider, &p, &stream);
            let mut l = CostLedger::default();
            process_chunk(&[0.0; 8], &mut b, &provider, schedule, &cfg, &p, &mut RandomSource::new(0), &mut l).unwrap();
            l
        };
        prop_assert_eq!(total.score_net_forwards, single.score_net_forwards * chunks as u64);
        prop_assert_eq!(total.mac_total, single.mac_total * chunks as u64);
    }

    #[test]
    fn streaming_output_is_causal(cut_chunk in 1usize..4, seed in any::<u64>()) {
        let p = SdeParams::default().with_steps(6);
        let net = small_score_net(7);
        let den = small_denoiser(8);
        let provider = Provider { score: &net, denoiser: Some(&den) };
        let stream = StreamConfig { chunk_ms: 1.0, sample_rate: 8000 };
        let schedule = GuidanceSchedule::from_n_phi(3, &p).unwrap();
        let mut rng = RandomSource::new(seed);
        let y: Vec<f64> = rng.normal_vec(40).iter().map(|v| 0.2 * v).collect();
        let mut y2 = y.clone();
        for v in &mut y2[8 * cut_chunk..] {
            *v += 0.5;
        }
        let cfg = SamplerConfig::default();
        let (a, _, _) = enhance_stream(&y, &stream, &provider, schedule, &cfg, &p, seed).unwrap();
        let (b, _, _) = enhance_stream(&y2, &stream, &provider, schedule, &cfg, &p, seed).unwrap();
        prop_assert_eq!(&a[..8 * cut_chunk], &b[..8 * cut_chunk]);
        prop_assert_ne!(&a[8 * cut_chunk..], &b[8 * cut_chunk..]);
    }

    #[test]
    fn mac_count_is_linear_in_frames(frames in 1usize..20) {
        let net = small_score_net(0);
        let den = small_denoiser(0);
        prop_assert_eq!(net.macs_per_forward(4 * frames), frames as u64 * net.macs_per_forward(4));
        prop_assert_eq!(den.macs_per_forward(4 * frames), frames as u64 * den.macs_per_forward(4));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdr_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut rng = RandomSource::new(seed);
        let x = rng.normal_vec(64);
        let n: Vec<f64> = rng.normal_vec(64).iter().map(|v| 0.3 * v).collect();
        let est: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + b).collect();
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let es: Vec<f64> = est.iter().map(|v| v * scale).collect();
        let a = sdr_db(&x, &est).unwrap();
        let b = sdr_db(&xs, &es).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn lsd_is_symmetric_and_zero_on_equal_inputs(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let a = rng.normal_vec(1024);
        let b = rng.normal_vec(1024);
        let ab = lsd(&a, &b, 512, 256).unwrap();
        let ba = lsd(&b, &a, 512, 256).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab > 0.0);
        prop_assert_eq!(lsd(&a, &a, 512, 256).unwrap(), 0.0);
    }

    #[test]
    fn synthesized_mixture_hits_the_requested_snr(seed in any::<u64>(), snr in -10.0f64..30.0, pink in any::<bool>()) {
        let spec = MixSpec {
            clean: CleanKind::SinusoidSum,
            noise: if pink { NoiseKind::Pink } else { NoiseKind::White },
            snr_db: snr,
            duration_s: 0.05,
            sample_rate: 16000,
            seed,
        };
        let (x, y) = synthesize_pair(&spec).unwrap();
        let achieved = sdr_db(x.samples(), y.samples()).unwrap();
        prop_assert!((achieved - snr).abs() < 1e-9, "{achieved} vs {snr}");
    }

    #[test]
    fn signals_reject_non_finite_samples(i in 0usize..8, bad in prop::sample::select(vec![f64::NAN, f64::INFINITY, f64::NEG_INFINITY])) {
        let mut v = vec![0.0; 8];
        v[i] = bad;
        prop_assert!(Signal::new(v, 16000).is_err());
    }
}

#[test]
fn analytic_score_model_costs_nothing() {
    let p = SdeParams::default();
    let model = AnalyticScore {
        prior: GaussianPrior0::new(vec![0.5; 4], 0.01).unwrap(),
        params: p,
    };
    let (_, l) = reverse_process(
        &[0.3; 4],
        &model,
        Guide::None,
        GuidanceSchedule::generative(&p),
        &SamplerConfig::default(),
        &p,
        &mut RandomSource::new(0),
    )
    .unwrap();
    assert_eq!(l.mac_total, 0);
    assert_eq!(l.score_net_forwards, 60);
}
