//! Reference solvers and dataset generation.

pub mod dataset;
pub mod kolmogorov;
pub mod kse;
pub mod swe;

pub use dataset::{generate_dataset, load_trajectory, DatasetKind, DatasetSpec, Manifest, TrajectoryMeta};
pub use kolmogorov::{solve_kolmogorov, vorticity_to_velocity, KolmogorovConfig, KolmogorovTrajectory};
pub use kse::{solve_kse, KseConfig};
pub use swe::{solve_swe_flood, SweConfig, SweRun};
