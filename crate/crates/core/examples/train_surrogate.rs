//! Train a plain and a mass-projected neural operator on Kolmogorov flow and roll out.

use specproj::metrics::divergence_loss;
use specproj::projection::{MassMode, Selector};
use specproj::rng;
use specproj::solvers::dataset::{generate_trajectory, DatasetKind, DatasetSpec};
use specproj::solvers::KolmogorovConfig;
use specproj::surrogate::{loss_relative_mse, markov_samples, predict, rollout, train, FnoHyper, FnoParams, TrainConfig};

fn main() -> specproj::Result<()> {
    let mut spec = DatasetSpec::new(DatasetKind::Kolmogorov);
    spec.kolmogorov = KolmogorovConfig { n: 32, frames: 11, ..KolmogorovConfig::default() };
    let mut train_set = Vec::new();
    for i in 0..8 {
        let (traj, _) = generate_trajectory(&spec, 0, i)?;
        // Channels 1 and 2 hold the velocity.
        train_set.extend(markov_samples(&traj, &[1, 2], 1, &[])?);
    }
    let (test_traj, _) = generate_trajectory(&spec, 0, 100)?;
    let test = markov_samples(&test_traj, &[1, 2], 1, &[])?;

    let hyper = FnoHyper { width: 8, modes: vec![8, 8], layers: 1, ..FnoHyper::new(2, 2, 2) };
    let cfg = TrainConfig { epochs: 20, lr: 1e-2, ..TrainConfig::default() };
    for selector in [Selector::None, Selector::Mass] {
        let mut r = rng::stream(0, "init");
        let init = FnoParams::init(hyper.clone(), &mut r)?.with_projection(selector, MassMode::Spatial2d, None, None, &mut r)?;
        let report = train(&init, &train_set, &cfg)?;
        let preds: Vec<_> = test.iter().map(|s| predict(&report.params, &s.input, &[])).collect::<Result<_, _>>()?;
        let targets: Vec<_> = test.iter().map(|s| s.target.clone()).collect();
        let frames = rollout(&report.params, &test[0].input, &[], 5, selector)?;
        println!(
            "{selector}: final loss {:.3e}, test relative MSE {:.3e}, rollout divergence {:.2e}",
            report.losses.last().unwrap(),
            loss_relative_mse(&preds, &targets)?,
            divergence_loss(frames.last().unwrap())?
        );
    }
    Ok(())
}
