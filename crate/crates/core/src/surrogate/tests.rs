use rand::Rng;

use super::*;
use crate::metrics::divergence_loss;
use crate::projection::{InvariantConvP4, MassMode, Selector};
use crate::rng;
use crate::spectral::{Axis, GridSpec, RealField};

fn random_field(grid: &GridSpec, ch: usize, seed: u64) -> RealField {
    let mut r = rng::stream(seed, "field");
    let data = (0..ch * grid.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    RealField::new(grid.clone(), ch, data).unwrap()
}

fn hyper(in_ch: usize, out_ch: usize, modes: Vec<usize>) -> FnoHyper {
    FnoHyper {
        width: 3,
        layers: 2,
        modes,
        ..FnoHyper::new(in_ch, out_ch, 0)
    }
}

/// Central differences on every coordinate; returns the worst per-group relative error.
fn gradient_check(params: &FnoParams, s: &Sample) -> Vec<(String, f64)> {
    let (_, g) = sample_loss_and_grad(params, s).unwrap();
    let analytic = g.flatten();
    let base = params.flatten();
    let h = 1e-6;
    let mut out = Vec::new();
    for group in params.groups() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in group.range.clone() {
            let mut p = params.clone();
            let mut f = base.clone();
            f[i] = base[i] + h;
            p.set_flat(&f).unwrap();
            let up = sample_loss_and_grad(&p, s).unwrap().0;
            f[i] = base[i] - h;
            p.set_flat(&f).unwrap();
            let down = sample_loss_and_grad(&p, s).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            num += (fd - analytic[i]).powi(2);
            den += fd.powi(2);
        }
        out.push((group.name.clone(), (num / den.max(1e-300)).sqrt()));
    }
    out
}

fn assert_gradients(params: &FnoParams, s: &Sample) {
    for (name, err) in gradient_check(params, s) {
        assert!(err < 1e-6, "group {name}: relative error {err:.3e}");
    }
}

fn pcno_2d(selector: Selector) -> (FnoParams, Sample) {
    let g = GridSpec::unit(&[4, 4]).unwrap();
    let mut r = rng::stream(3, "init");
    let params = FnoParams::init(hyper(2, 2, vec![2, 2]), &mut r)
        .unwrap()
        .with_projection(
            selector,
            MassMode::Spatial2d,
            Some(&[2, 2]),
            Some((&[4, 4], vec![1, 1], InvariantConvP4::new(0.6, 0.1, 0.05))),
            &mut r,
        )
        .unwrap();
    let s = Sample {
        input: random_field(&g, 2, 1),
        cond: vec![],
        target: random_field(&g, 2, 2),
    };
    (params, s)
}

#[test]
fn gradients_plain_2d() {
    let (p, s) = pcno_2d(Selector::None);
    assert_gradients(&p, &s);
}

#[test]
fn gradients_through_mass_projection() {
    let (p, s) = pcno_2d(Selector::Mass);
    assert_gradients(&p, &s);
}

#[test]
fn gradients_through_momentum_projection() {
    let (p, s) = pcno_2d(Selector::Momentum);
    assert_gradients(&p, &s);
}

#[test]
fn gradients_through_both_projections() {
    let (p, s) = pcno_2d(Selector::Both);
    let names: Vec<String> = p.groups().into_iter().map(|g| g.name).collect();
    assert!(names.contains(&"proj.w_spe".to_string()));
    assert!(names.contains(&"proj.momentum".to_string()));
    assert_gradients(&p, &s);
}

#[test]
fn gradients_1d_with_conditioning() {
    let g = GridSpec::periodic(&[16], &[2.0]).unwrap();
    let mut h = hyper(1, 1, vec![5]);
    h.cond_ch = 2;
    h.layers = 1;
    let p = FnoParams::init(h, &mut rng::stream(4, "init")).unwrap();
    let s = Sample {
        input: random_field(&g, 1, 5),
        cond: vec![0.3, -1.2],
        target: random_field(&g, 1, 6),
    };
    assert_gradients(&p, &s);
}

#[test]
fn gradients_spatiotemporal_with_time_padding() {
    let g = GridSpec::new(vec![
        Axis::temporal("t", 4, 4.0),
        Axis::spatial("x", 4, 1.0),
        Axis::spatial("y", 4, 1.0),
    ])
    .unwrap();
    let mut h = hyper(3, 3, vec![2, 2, 2]);
    h.width = 2;
    h.layers = 1;
    h.time_padding = 2;
    let mut r = rng::stream(5, "init");
    let p = FnoParams::init(h, &mut r)
        .unwrap()
        .with_projection(Selector::Mass, MassMode::Spatiotemporal3d, Some(&[2, 2, 2]), None, &mut r)
        .unwrap();
    let s = Sample {
        input: random_field(&g, 3, 7),
        cond: vec![],
        target: random_field(&g, 3, 8),
    };
    assert_gradients(&p, &s);
}

#[test]
fn zero_weights_give_the_output_bias() {
    let g = GridSpec::unit(&[8, 8]).unwrap();
    let mut p = FnoParams::init(hyper(2, 2, vec![3, 3]), &mut rng::stream(1, "init")).unwrap();
    let b2 = p.head_b2.clone();
    p = p.zeros_like();
    p.head_b2 = b2.clone();
    let y = fno_forward(&p, &random_field(&g, 2, 9), &[]).unwrap();
    for c in 0..2 {
        assert!(y.channel(c).iter().all(|&v| v == b2[c]));
    }
}

#[test]
fn identity_configured_model_is_the_identity() {
    let g = GridSpec::unit(&[6, 5]).unwrap();
    let mut h = hyper(2, 2, vec![2, 2]);
    h.width = 2;
    h.activation = Activation::Identity;
    let mut p = FnoParams::init(h, &mut rng::stream(1, "init")).unwrap().zeros_like();
    let eye = vec![1.0, 0.0, 0.0, 1.0];
    p.lift_w = eye.clone();
    p.head_w1 = eye.clone();
    p.head_w2 = eye.clone();
    for l in &mut p.linears {
        *l = eye.clone();
    }
    let u = random_field(&g, 2, 3);
    let y = fno_forward(&p, &u, &[]).unwrap();
    assert!(y.lincomb(1.0, &u, -1.0).unwrap().max_abs() < 1e-14);
}

#[test]
fn operator_commutes_with_shifts() {
    let g = GridSpec::unit(&[8, 8]).unwrap();
    let p = FnoParams::init(hyper(2, 2, vec![3, 3]), &mut rng::stream(2, "init")).unwrap();
    let u = random_field(&g, 2, 4);
    let a = fno_forward(&p, &u.roll(&[3, -2]).unwrap(), &[]).unwrap();
    let b = fno_forward(&p, &u, &[]).unwrap().roll(&[3, -2]).unwrap();
    assert!(a.lincomb(1.0, &b, -1.0).unwrap().max_abs() < 1e-12);
}

#[test]
fn mass_projected_output_is_divergence_free() {
    let (p, s) = pcno_2d(Selector::Mass);
    let g = GridSpec::unit(&[16, 16]).unwrap();
    let y = predict(&p, &random_field(&g, 2, 11), &[]).unwrap();
    assert!(divergence_loss(&y).unwrap() < 1e-10);
    assert!(predict(&p, &s.input, &[1.0]).is_err());
}

#[test]
fn learns_the_identity_map() {
    let g = GridSpec::unit(&[8, 8]).unwrap();
    let samples: Vec<Sample> = (0..4)
        .map(|i| {
            let u = random_field(&g, 1, 20 + i);
            Sample {
                input: u.clone(),
                cond: vec![],
                target: u,
            }
        })
        .collect();
    let mut h = hyper(1, 1, vec![4, 4]);
    h.width = 32;
    h.layers = 1;
    let p = FnoParams::init(h, &mut rng::stream(7, "init")).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch: 4,
        lr: 1e-2,
        weight_decay: 0.0,
        strategy: Strategy::Markov,
        seed: 1,
    };
    let report = train(&p, &samples, &cfg).unwrap();
    assert_eq!(report.losses.len(), 200);
    let last = *report.losses.last().unwrap();
    assert!(last < 1e-4, "final loss {last:.3e}");

    let u0 = samples[0].input.clone();
    let traj = rollout(&report.params, &u0, &[], 5, Selector::None).unwrap();
    let drift = traj.last().unwrap().lincomb(1.0, &u0, -1.0).unwrap().norm_sq() / u0.norm_sq();
    assert!(drift < 1e-3, "rollout drift {drift:.3e}");
}

#[test]
fn relative_mse_examples() {
    let g = GridSpec::unit(&[4]).unwrap();
    let t = random_field(&g, 1, 1);
    assert_eq!(loss_relative_mse(&[t.clone()], &[t.clone()]).unwrap(), 0.0);
    assert_eq!(loss_relative_mse(&[t.scaled(0.0)], &[t.clone()]).unwrap(), 1.0);
    assert!((loss_relative_mse(&[t.scaled(2.0)], &[t.clone()]).unwrap() - 1.0).abs() < 1e-15);
    assert!(loss_relative_mse(&[t.clone()], &[t.scaled(0.0)]).is_err());
}

#[test]
fn head_bias_gradient_vanishes_at_the_target() {
    let (p, s) = pcno_2d(Selector::Mass);
    let pred = predict(&p, &s.input, &[]).unwrap();
    let s = Sample { target: pred, ..s };
    let (loss, g) = sample_loss_and_grad(&p, &s).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.head_b2.iter().all(|&v| v == 0.0));
}

#[test]
fn gradient_is_linear_in_the_output_adjoint() {
    let (p, s) = pcno_2d(Selector::Both);
    let (_, tape) = forward_with_tape(&p, &s.input, &[], Selector::Both).unwrap();
    let g = s.input.grid().clone();
    let (d1, d2) = (random_field(&g, 2, 31), random_field(&g, 2, 32));
    let (a, b) = (0.7, -1.3);
    let combined = backward(&p, &tape, &d1.lincomb(a, &d2, b).unwrap()).unwrap().flatten();
    let g1 = backward(&p, &tape, &d1).unwrap().flatten();
    let g2 = backward(&p, &tape, &d2).unwrap().flatten();
    for i in 0..combined.len() {
        let want = a * g1[i] + b * g2[i];
        assert!((combined[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn rollout_under_mass_selector_stays_solenoidal() {
    let (p, s) = pcno_2d(Selector::Mass);
    let traj = rollout(&p, &s.input, &[], 4, Selector::Mass).unwrap();
    assert_eq!(traj[0], pcno_forward(&p, &s.input, &[], Selector::Mass).unwrap());
    for frame in &traj {
        assert!(divergence_loss(frame).unwrap() < 1e-10);
    }
    assert!(rollout(&p, &s.input, &[], 0, Selector::Mass).is_err());
}

#[test]
fn pcno_with_none_equals_fno_and_unit_kernel_doubles_mass() {
    let (mut p, s) = pcno_2d(Selector::Both);
    assert_eq!(pcno_forward(&p, &s.input, &[], Selector::None).unwrap(), fno_forward(&p, &s.input, &[]).unwrap());
    let m = p.projection.momentum.as_mut().unwrap();
    *m = crate::projection::MomentumProjection::unit(&[4, 4], 2, vec![0, 0]);
    p.projection.mass.spectral_conv = None;
    let both = pcno_forward(&p, &s.input, &[], Selector::Both).unwrap();
    let mass = pcno_forward(&p, &s.input, &[], Selector::Mass).unwrap();
    assert!(both.lincomb(1.0, &mass, -2.0).unwrap().max_abs() < 1e-12);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (p, s) = pcno_2d(Selector::Both);
    let samples = vec![s.clone(), Sample { input: s.target.clone(), ..s }];
    let cfg = TrainConfig {
        epochs: 3,
        batch: 2,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&p, &samples, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let zero = train(&p, &samples, &TrainConfig { epochs: 0, ..cfg.clone() }).unwrap();
    assert_eq!(zero.params, p);
    assert!(zero.losses.is_empty());
    let wrong = TrainConfig {
        strategy: Strategy::OneShot,
        ..cfg
    };
    assert!(train(&p, &samples, &wrong).is_err());
}

#[test]
fn diverging_training_aborts() {
    let (p, s) = pcno_2d(Selector::None);
    let cfg = TrainConfig {
        epochs: 50,
        batch: 1,
        lr: 1e6,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    match train(&p, &[s], &cfg) {
        Err(crate::Error::Numerical(_)) => {}
        other => panic!("expected a numerical failure, got {other:?}"),
    }
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    for selector in [Selector::None, Selector::Both] {
        let (p, s) = pcno_2d(selector);
        p.save(&path).unwrap();
        let q = FnoParams::load(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(predict(&p, &s.input, &[]).unwrap(), predict(&q, &s.input, &[]).unwrap());
    }
    std::fs::write(&path, b"specproj-model 1\nmodel_kind = fno\nblocks = \nend_header\n").unwrap();
    assert!(FnoParams::load(&path).is_err());
}

#[test]
fn rollout_feeds_predictions_back() {
    let g = GridSpec::unit(&[8]).unwrap();
    let p = FnoParams::init(hyper(2, 1, vec![3]), &mut rng::stream(8, "init")).unwrap();
    let u0 = random_field(&g, 2, 1);
    let traj = rollout(&p, &u0, &[], 3, Selector::None).unwrap();
    assert_eq!(traj.len(), 3);
    let window = advance_window(&u0, &traj[0]).unwrap();
    assert_eq!(traj[1], fno_forward(&p, &window, &[]).unwrap());
    let bad = FnoParams::init(hyper(3, 2, vec![3]), &mut rng::stream(8, "init")).unwrap();
    assert!(rollout(&bad, &random_field(&g, 3, 1), &[], 2, Selector::None).is_err());
}
