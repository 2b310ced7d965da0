use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::rng;
use crate::spectral::{GridSpec, RealField};
use crate::surrogate::{predict, rollout, FnoHyper, FnoParams};

fn toy_pcno() -> FnoParams {
    let h = FnoHyper {
        width: 4,
        modes: vec![2, 2],
        layers: 1,
        ..FnoHyper::new(1, 1, 2)
    };
    FnoParams::init(h, &mut rng::stream(1, "pcno")).unwrap()
}

fn grid() -> GridSpec {
    GridSpec::unit(&[4, 4]).unwrap()
}

fn random_field(seed: u64) -> RealField {
    let mut r = rng::stream(seed, "field");
    RealField::new(grid(), 1, (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn model(normalizer: ResidualNormalizer, variant: Variant) -> DenoiserModel {
    let mut r = rng::stream(2, "den");
    let mut denoiser = ToyDenoiser::new(16, 32, 8, 4, &mut r).unwrap();
    denoiser.w3 = (0..denoiser.w3.len()).map(|_| r.random_range(-0.2..0.2)).collect();
    DenoiserModel {
        denoiser,
        normalizer,
        variant,
        sched: NoiseSchedule::default(),
    }
}

#[test]
fn default_time_points() {
    assert_eq!(DEFAULT_TIME_POINTS, [80.0, 24.4, 5.84, 0.9, 0.661]);
}

#[test]
fn multistep_replays_by_hand() {
    let sched = NoiseSchedule::default();
    let den = ToyDenoiser::new(3, 0, 4, 2, &mut rng::stream(1, "d")).unwrap();
    // Untrained output layer: f(x, t) = c_skip(t) x.
    let got = sample_multistep(&den, &[], &[80.0, 0.9], &sched, &mut rng::stream(5, "s")).unwrap();
    let mut r = rng::stream(5, "s");
    let z1: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
    let z2: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
    let (k80, _) = skip_out_coeffs(80.0, &sched).unwrap();
    let (k09, _) = skip_out_coeffs(0.9, &sched).unwrap();
    let inject = 0.899_997_777_775_034_3;
    assert!(((0.81f64 - 0.002 * 0.002).sqrt() - inject).abs() < 1e-15);
    for j in 0..3 {
        let want = k09 * (k80 * (80.0 * z1[j]) + inject * z2[j]);
        assert!((got[j] - want).abs() < 1e-14, "{} vs {want}", got[j]);
    }
    let one = sample_multistep(&den, &[], &[80.0], &sched, &mut rng::stream(5, "s")).unwrap();
    for j in 0..3 {
        assert_eq!(one[j], k80 * (80.0 * z1[j]));
    }
}

#[test]
fn time_points_are_validated() {
    let sched = NoiseSchedule::default();
    let den = ToyDenoiser::new(2, 0, 4, 2, &mut rng::stream(1, "d")).unwrap();
    let mut r = rng::stream(0, "s");
    assert!(sample_multistep(&den, &[], &[0.9, 5.84], &sched, &mut r).is_err());
    assert!(sample_multistep(&den, &[], &[5.0, 5.0], &sched, &mut r).is_err());
    assert!(sample_multistep(&den, &[], &[], &sched, &mut r).is_err());
    assert!(sample_multistep(&den, &[], &[100.0], &sched, &mut r).is_err());
    assert!(sample_multistep(&den, &[], &[1.0, 0.002], &sched, &mut r).is_err());
}

#[test]
fn index_sampler_matches_weights() {
    let sched = NoiseSchedule::default();
    let n = 20;
    let w = index_weights(n, &sched).unwrap();
    assert!(w.iter().all(|&p| p > 0.0));
    let draws = 1_000_000;
    let mut counts = vec![0usize; n - 1];
    let mut r = rng::stream(11, "index");
    for _ in 0..draws {
        let i = sample_index(n, &sched, &mut r).unwrap();
        assert!((1..n).contains(&i));
        counts[i - 1] += 1;
    }
    for (c, p) in counts.iter().zip(&w) {
        let expect = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - expect).abs() <= 3.0 * sd, "count {c} vs {expect:.1} +- {sd:.1}");
    }
}

#[test]
fn zero_residual_model_has_no_spread() {
    let pcno = toy_pcno();
    let m = model(ResidualNormalizer::new(vec![0.0], vec![0.0]).unwrap(), Variant::DiffPcno);
    let u0 = random_field(3);
    let cfg = EnsembleConfig {
        steps: 3,
        n_traj: 6,
        time_points: DEFAULT_TIME_POINTS.to_vec(),
        seed: 4,
    };
    let e = uncertainty_ensemble(&pcno, Some(&m), &u0, &[], &cfg).unwrap();
    let plain = rollout(&pcno, &u0, &[], 3, pcno.selector).unwrap();
    for s in 0..3 {
        assert!(e.std[s].data().iter().all(|&v| v == 0.0));
        assert_eq!(e.mean[s], plain[s]);
    }
    let step = diffpcno_step(&pcno, &m, &u0, &[], &DEFAULT_TIME_POINTS, &mut rng::stream(0, "x")).unwrap();
    assert_eq!(step.prediction, predict(&pcno, &u0, &[]).unwrap());
    assert_eq!(step.deterministic, step.prediction);
    let det = uncertainty_ensemble(&pcno, None, &u0, &[], &cfg).unwrap();
    assert_eq!(det.mean, plain);
    assert!(uncertainty_ensemble(&pcno, None, &u0, &[], &EnsembleConfig { n_traj: 1, ..cfg }).is_err());
}

#[test]
fn corrected_steps_are_reproducible() {
    let pcno = toy_pcno();
    let m = model(ResidualNormalizer::new(vec![-0.5], vec![1.5]).unwrap(), Variant::DiffPcno);
    let u0 = random_field(5);
    let a = diffpcno_step(&pcno, &m, &u0, &[], &DEFAULT_TIME_POINTS, &mut rng::stream(6, "x")).unwrap();
    let b = diffpcno_step(&pcno, &m, &u0, &[], &DEFAULT_TIME_POINTS, &mut rng::stream(6, "x")).unwrap();
    assert_eq!(a, b);
    let c = diffpcno_step(&pcno, &m, &u0, &[], &DEFAULT_TIME_POINTS, &mut rng::stream(7, "x")).unwrap();
    assert_ne!(a.prediction, c.prediction);
    // Clamped residuals stay inside the fitted range.
    let r = a.prediction.lincomb(1.0, &a.deterministic, -1.0).unwrap();
    assert!(r.data().iter().all(|&v| (-0.5 - 1e-12..=1.5 + 1e-12).contains(&v)));
}

#[test]
fn ensemble_std_of_injected_noise() {
    let sigma = 0.3;
    let n = 200;
    let base = random_field(8);
    let mut r = rng::stream(9, "noise");
    let members: Vec<Vec<RealField>> = (0..n)
        .map(|_| {
            let noisy = base.data().iter().map(|v| v + sigma * r.sample::<f64, _>(StandardNormal)).collect();
            vec![RealField::new(grid(), 1, noisy).unwrap()]
        })
        .collect();
    let e = ensemble_stats(&members).unwrap();
    let bound = 3.0 * sigma / (2.0 * (n - 1) as f64).sqrt();
    for &s in e.std[0].data() {
        assert!((s - sigma).abs() < bound, "std {s} outside {sigma} +- {bound}");
    }
}

#[test]
fn denoiser_model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("den.bin");
    for variant in [Variant::DiffPcno, Variant::Refiner] {
        let m = model(ResidualNormalizer::new(vec![-0.25], vec![0.75]).unwrap(), variant);
        m.save(&path).unwrap();
        let back = DenoiserModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
    toy_pcno().save(&path).unwrap();
    assert!(DenoiserModel::load(&path).is_err());
}

#[test]
fn refiner_returns_denormalized_states() {
    let pcno = toy_pcno();
    let m = model(ResidualNormalizer::new(vec![2.0], vec![2.0]).unwrap(), Variant::Refiner);
    let u0 = random_field(10);
    let step = diffpcno_step(&pcno, &m, &u0, &[], &[80.0, 0.9], &mut rng::stream(1, "x")).unwrap();
    assert!(step.prediction.data().iter().all(|&v| v == 2.0));
}
