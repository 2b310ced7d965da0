//! One trajectory from each reference solver, plus a small dataset on disk.

use specproj::rng;
use specproj::solvers::dataset::{generate_dataset, DatasetKind, DatasetSpec};
use specproj::solvers::kolmogorov::gaussian_random_vorticity;
use specproj::solvers::kse::kse_random_initial;
use specproj::solvers::swe::synthetic_dem;
use specproj::solvers::{solve_kolmogorov, solve_kse, solve_swe_flood, KolmogorovConfig, KseConfig, SweConfig};

fn main() -> specproj::Result<()> {
    let kse = KseConfig { warmup: 100, steps: 50, ..KseConfig::default() };
    let u0 = kse_random_initial(kse.n, kse.length, &mut rng::stream(1, "kse"));
    let u = solve_kse(&kse, &u0)?;
    println!("KSE: {} frames of {} points, max |u| {:.3}", kse.steps, kse.n, u.max_abs());

    let kol = KolmogorovConfig { n: 32, frames: 5, ..KolmogorovConfig::default() };
    let w0 = gaussian_random_vorticity(&kol.grid()?, kol.init_tau, kol.init_alpha, &mut rng::stream(2, "kol"))?;
    let traj = solve_kolmogorov(&kol, &w0)?;
    let last = traj.velocity.last().unwrap();
    println!("Kolmogorov: {} frames, divergence {:.2e}", traj.vorticity.len(), specproj::metrics::divergence_loss(last)?);

    let swe = SweConfig {
        dem: synthetic_dem(24, 24, 30.0, &mut rng::stream(3, "dem")),
        rainfall: vec![(0.0, 2e-5), (1800.0, 0.0)],
        ..SweConfig::flat(24, 24, 30.0)
    };
    let run = solve_swe_flood(&swe, None)?;
    println!("Flood: {} frames in {} steps, peak depth {:.3} m", run.times.len(), run.steps, run.depth.max_abs());

    let dir = std::env::temp_dir().join("specproj_example_dataset");
    let mut spec = DatasetSpec::new(DatasetKind::Kse);
    spec.kse = KseConfig { n: 64, warmup: 50, steps: 20, ..KseConfig::default() };
    let manifest = generate_dataset(&spec, 3, 7, &dir)?;
    println!("dataset of {} trajectories in {}", manifest.entries.len(), dir.display());
    Ok(())
}
