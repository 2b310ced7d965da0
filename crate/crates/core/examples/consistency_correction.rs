//! Learn a Gaussian residual with consistency training and sample corrected forecasts.

use rand::Rng;
use rand_distr::StandardNormal;
use specproj::consistency::{
    fit_normalizer, train_consistency, uncertainty_ensemble, CtConfig, CtSample, DenoiserModel, EnsembleConfig,
    NoiseSchedule, ToyDenoiser, Variant, DEFAULT_TIME_POINTS,
};
use specproj::rng;
use specproj::spectral::{GridSpec, RealField};
use specproj::surrogate::{predict, FnoHyper, FnoParams};

fn main() -> specproj::Result<()> {
    let g = GridSpec::unit(&[4, 4])?;
    let pcno = FnoParams::init(FnoHyper { width: 4, modes: vec![2, 2], layers: 1, ..FnoHyper::new(1, 1, 2) }, &mut rng::stream(1, "pcno"))?;
    let mut r = rng::stream(2, "data");
    let samples: Vec<CtSample> = (0..256)
        .map(|_| {
            let u = RealField::new(g.clone(), 1, (0..16).map(|_| r.random_range(-1.0..1.0)).collect())?;
            let u_hat = predict(&pcno, &u, &[])?;
            let y = u_hat.data().iter().map(|v| v + 0.3 + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
            Ok(CtSample { y: RealField::new(g.clone(), 1, y)?, u_t: u, u_hat })
        })
        .collect::<specproj::Result<_>>()?;

    let normalizer = fit_normalizer(&samples, Variant::DiffPcno)?;
    let den = ToyDenoiser::new(16, 32, 64, 8, &mut rng::stream(3, "den"))?;
    let sched = NoiseSchedule::default();
    let cfg = CtConfig { epochs: 100, batch: 32, lr: 1e-3, ..CtConfig::default() };
    let report = train_consistency(&den, &samples, Variant::DiffPcno, &normalizer, &sched, &cfg)?;
    println!("CT loss {:.3e} -> {:.3e}", report.losses[0], report.losses.last().unwrap());

    let model = DenoiserModel { denoiser: report.denoiser, normalizer, variant: Variant::DiffPcno, sched };
    let u0 = samples[0].u_t.clone();
    let ec = EnsembleConfig { steps: 1, n_traj: 50, time_points: DEFAULT_TIME_POINTS.to_vec(), seed: 0 };
    let e = uncertainty_ensemble(&pcno, Some(&model), &u0, &[], &ec)?;
    let base = predict(&pcno, &u0, &[])?;
    let bias = e.mean[0].data().iter().zip(base.data()).map(|(a, b)| a - b).sum::<f64>() / 16.0;
    let spread = e.std[0].data().iter().sum::<f64>() / 16.0;
    println!("learned residual mean {bias:.3} (true 0.3), spread {spread:.3} (true 0.1)");
    Ok(())
}
