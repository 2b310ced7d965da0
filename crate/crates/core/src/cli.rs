//! The `specproj` command-line front end.
//!
//! Every subcommand option is also a config key, so a run can be repeated from the
//! `run.cfg` snapshot written next to its outputs:
//! `specproj --config out/run.cfg --out out <subcommand>`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::consistency::{
    diffpcno_step, fit_normalizer, train_consistency, uncertainty_ensemble, CtConfig, CtSample, DenoiserModel,
    EnsembleConfig, NoiseSchedule, ToyDenoiser, Variant, DEFAULT_TIME_POINTS,
};
use crate::error::{Error, Result};
use crate::metrics::{self, CsiCounts, MetricReport};
use crate::projection::{
    compose_projection, InvariantConvP4, MassMode, MassProjectionConfig, MomentumProjection, ProjectionParams, Selector,
};
use crate::rng;
use crate::solvers::dataset::{
    generate_dataset, load_trajectory, split_in_time, stack_in_time, DatasetKind, DatasetSpec, Manifest,
    SweDatasetConfig, TrajectoryMeta,
};
use crate::solvers::{KolmogorovConfig, KseConfig};
use crate::spectral::fld::read_tensor;
use crate::spectral::{write_fld, Axis, GridSpec, RealField};
use crate::surrogate::{
    markov_samples, markov_window, one_shot_sample, predict, rollout, train, Activation, FnoHyper, FnoParams, Sample, Strategy,
    TrainConfig,
};

pub const SNAPSHOT: &str = "run.cfg";
pub const THREADS_ENV: &str = "SPECPROJ_THREADS";

#[derive(Debug, Parser)]
#[command(name = "specproj", version, about = "Physics-consistent projections, reference solvers and neural surrogates")]
struct Cli {
    /// Run seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to SPECPROJ_THREADS, then all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset of trajectories.
    Generate {
        /// kse | kolmogorov | swe
        kind: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Apply a projection to a field file.
    Project {
        input: Option<PathBuf>,
        /// none | mass | momentum | both
        #[arg(long)]
        selector: Option<String>,
        /// Model file whose projection weights to use.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Train a surrogate or a consistency denoiser on a dataset.
    Train {
        dataset: Option<PathBuf>,
        /// fno | pcno | diffpcno | refiner
        #[arg(long)]
        model_kind: Option<String>,
        /// Frozen surrogate for the diffpcno and refiner kinds.
        #[arg(long)]
        pcno: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Autoregressive rollout of a surrogate.
    Rollout {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw corrected one-step forecasts.
    Sample {
        /// Denoiser model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        pcno: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Comma-separated, strictly decreasing.
        #[arg(long)]
        time_points: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Ensemble mean and standard deviation of stochastic rollouts.
    Uncertainty {
        /// Surrogate model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        denoiser: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        time_points: Option<String>,
    },
    /// Compare prediction and reference trajectory files.
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<String>,
        #[arg(long)]
        thresholds: Option<String>,
    },
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn num<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Project { .. } => "project",
            Command::Train { .. } => "train",
            Command::Rollout { .. } => "rollout",
            Command::Sample { .. } => "sample",
            Command::Uncertainty { .. } => "uncertainty",
            Command::Evaluate { .. } => "evaluate",
        }
    }

    /// Flags as config entries.
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::Generate { kind, count } => vec![("kind", kind.clone()), ("count", num(count))],
            Command::Project { input, selector, params } => vec![
                ("input", path_str(input)),
                ("selector", selector.clone()),
                ("params", path_str(params)),
            ],
            Command::Train {
                dataset,
                model_kind,
                pcno,
                epochs,
            } => vec![
                ("dataset", path_str(dataset)),
                ("model_kind", model_kind.clone()),
                ("pcno", path_str(pcno)),
                ("epochs", num(epochs)),
            ],
            Command::Rollout { model, init, steps } => vec![
                ("model", path_str(model)),
                ("init", path_str(init)),
                ("steps", num(steps)),
            ],
            Command::Sample {
                model,
                pcno,
                init,
                time_points,
                count,
            } => vec![
                ("model", path_str(model)),
                ("pcno", path_str(pcno)),
                ("init", path_str(init)),
                ("time_points", time_points.clone()),
                ("count", num(count)),
            ],
            Command::Uncertainty {
                model,
                denoiser,
                init,
                steps,
                n_traj,
                time_points,
            } => vec![
                ("model", path_str(model)),
                ("denoiser", path_str(denoiser)),
                ("init", path_str(init)),
                ("steps", num(steps)),
                ("n_traj", num(n_traj)),
                ("time_points", time_points.clone()),
            ],
            Command::Evaluate {
                pred,
                truth,
                metrics,
                thresholds,
            } => vec![
                ("pred", path_str(pred)),
                ("truth", path_str(truth)),
                ("metrics", metrics.clone()),
                ("thresholds", thresholds.clone()),
            ],
        }
    }
}

fn time_points_default() -> String {
    DEFAULT_TIME_POINTS.map(|t| t.to_string()).join(",")
}

/// Accepted keys and defaults per subcommand. An empty default means "unset".
fn known_keys(command: &str, cfg: &RunConfig) -> Vec<(String, String)> {
    let mut k: Vec<(&str, String)> = vec![("seed", "0".into())];
    match command {
        "generate" => {
            let kse = KseConfig::default();
            let kol = KolmogorovConfig::default();
            let swe = SweDatasetConfig::default();
            k.extend([
                ("kind", String::new()),
                ("count", "4".into()),
                ("kse.n", kse.n.to_string()),
                ("kse.length", kse.length.to_string()),
                ("kse.dt", kse.dt.to_string()),
                ("kse.warmup", kse.warmup.to_string()),
                ("kse.steps", kse.steps.to_string()),
                ("kse.substeps", kse.substeps.to_string()),
                ("kse.vary_nu", "false".into()),
                ("kolmogorov.n", kol.n.to_string()),
                ("kolmogorov.nu", kol.nu.to_string()),
                ("kolmogorov.dt", kol.dt.to_string()),
                ("kolmogorov.forcing", kol.forcing_amplitude.to_string()),
                ("kolmogorov.record_every", kol.record_every.to_string()),
                ("kolmogorov.frames", kol.frames.to_string()),
                ("kolmogorov.warmup", kol.warmup.to_string()),
                ("kolmogorov.init_tau", kol.init_tau.to_string()),
                ("kolmogorov.init_alpha", kol.init_alpha.to_string()),
                ("swe.n", swe.n.to_string()),
                ("swe.dx", swe.dx.to_string()),
                ("swe.manning", swe.manning.to_string()),
                ("swe.duration", swe.duration.to_string()),
                ("swe.record_interval", swe.record_interval.to_string()),
                ("swe.rain_min", swe.rain_range.0.to_string()),
                ("swe.rain_max", swe.rain_range.1.to_string()),
                ("swe.rain_duration", swe.rain_duration.to_string()),
            ]);
        }
        "project" => k.extend([
            ("input", String::new()),
            ("selector", "mass".into()),
            ("params", String::new()),
            ("mass_mode", "spatial".into()),
            ("trajectory", "false".into()),
            ("momentum.padding", String::new()),
            ("momentum.w_inv", "1,0,0".into()),
        ]),
        "train" => {
            let kind = cfg.raw("model_kind").unwrap_or("fno");
            let denoising = kind == "diffpcno" || kind == "refiner";
            k.extend([
                ("dataset", String::new()),
                ("model_kind", "fno".into()),
                ("pcno", String::new()),
                ("epochs", "10".into()),
                ("batch", if denoising { "16" } else { "8" }.into()),
                ("lr", if denoising { "1e-4" } else { "1e-3" }.into()),
                ("weight_decay", if denoising { "0" } else { "1e-4" }.into()),
                ("strategy", "markov".into()),
                ("width", "20".into()),
                ("modes", "12".into()),
                ("layers", "4".into()),
                ("activation", "gelu".into()),
                ("time_padding", "0".into()),
                ("t_in", "1".into()),
                ("t_out", "0".into()),
                ("channels", String::new()),
                ("cond", String::new()),
                ("max_trajectories", "0".into()),
                ("selector", if kind == "pcno" { "mass" } else { "none" }.into()),
                ("mass_mode", "spatial".into()),
                ("w_spe_modes", String::new()),
                ("momentum.padding", String::new()),
                ("momentum.w_inv", "1,0,0".into()),
                ("hidden", "64".into()),
                ("embed", "8".into()),
                ("huber_c", String::new()),
                ("s0", "10".into()),
                ("s1", "1280".into()),
            ]);
        }
        "rollout" => k.extend([
            ("model", String::new()),
            ("init", String::new()),
            ("init_frame", "0".into()),
            ("channels", String::new()),
            ("steps", "10".into()),
            ("cond", String::new()),
            ("selector", String::new()),
        ]),
        "sample" => k.extend([
            ("model", String::new()),
            ("pcno", String::new()),
            ("init", String::new()),
            ("init_frame", "0".into()),
            ("channels", String::new()),
            ("time_points", time_points_default()),
            ("count", "1".into()),
            ("cond", String::new()),
        ]),
        "uncertainty" => k.extend([
            ("model", String::new()),
            ("denoiser", String::new()),
            ("init", String::new()),
            ("init_frame", "0".into()),
            ("channels", String::new()),
            ("steps", "10".into()),
            ("n_traj", "50".into()),
            ("time_points", time_points_default()),
            ("cond", String::new()),
        ]),
        "evaluate" => k.extend([
            ("pred", String::new()),
            ("truth", String::new()),
            ("metrics", "nrmse,mse,pearson,csi".into()),
            ("thresholds", "0.05,0.5".into()),
            ("corr_thresholds", "0.9,0.8".into()),
            ("channel", "0".into()),
            ("truth_offset", "0".into()),
            ("truth_channels", String::new()),
        ]),
        _ => {}
    }
    k.into_iter().map(|(a, b)| (a.to_string(), b)).collect()
}

/// Entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a thread count, got '{v}'"))),
        _ => Ok(0),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(),
    };
    for (key, value) in cli.command.entries() {
        if let Some(v) = value {
            cfg.set(key, v);
        }
    }
    cfg.apply_overrides(cli.overrides.iter().map(String::as_str))?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    let name = cli.command.name();
    let known = known_keys(name, &cfg);
    let refs: Vec<(&str, &str)> = known.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    cfg.resolve(&refs)?;

    let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cli.threads)?)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match name {
        "generate" => cmd_generate(&cfg, &out),
        "project" => cmd_project(&cfg, &out),
        "train" => cmd_train(&cfg, &out),
        "rollout" => cmd_rollout(&cfg, &out),
        "sample" => cmd_sample(&cfg, &out),
        "uncertainty" => cmd_uncertainty(&cfg, &out),
        _ => cmd_evaluate(&cfg, &out),
    })?;
    cfg.write(out.join(SNAPSHOT))
}

fn required<'a>(cfg: &'a RunConfig, key: &str) -> Result<&'a str> {
    match cfg.raw(key) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Usage(format!("'{key}' is required"))),
    }
}

fn optional<'a>(cfg: &'a RunConfig, key: &str) -> Option<&'a str> {
    cfg.raw(key).filter(|v| !v.is_empty())
}

fn list<T: std::str::FromStr>(cfg: &RunConfig, key: &str) -> Result<Vec<T>> {
    if optional(cfg, key).is_none() {
        return Ok(Vec::new());
    }
    cfg.get_list(key)
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let kind: DatasetKind = required(cfg, "kind")?.parse()?;
    let mut spec = DatasetSpec::new(kind);
    spec.kse = KseConfig {
        n: cfg.get("kse.n")?,
        length: cfg.get("kse.length")?,
        dt: cfg.get("kse.dt")?,
        warmup: cfg.get("kse.warmup")?,
        steps: cfg.get("kse.steps")?,
        substeps: cfg.get("kse.substeps")?,
        ..KseConfig::default()
    };
    spec.kse_vary_nu = cfg.get("kse.vary_nu")?;
    spec.kolmogorov = KolmogorovConfig {
        n: cfg.get("kolmogorov.n")?,
        nu: cfg.get("kolmogorov.nu")?,
        dt: cfg.get("kolmogorov.dt")?,
        forcing_amplitude: cfg.get("kolmogorov.forcing")?,
        record_every: cfg.get("kolmogorov.record_every")?,
        frames: cfg.get("kolmogorov.frames")?,
        warmup: cfg.get("kolmogorov.warmup")?,
        init_tau: cfg.get("kolmogorov.init_tau")?,
        init_alpha: cfg.get("kolmogorov.init_alpha")?,
    };
    spec.swe = SweDatasetConfig {
        n: cfg.get("swe.n")?,
        dx: cfg.get("swe.dx")?,
        manning: cfg.get("swe.manning")?,
        duration: cfg.get("swe.duration")?,
        record_interval: cfg.get("swe.record_interval")?,
        rain_range: (cfg.get("swe.rain_min")?, cfg.get("swe.rain_max")?),
        rain_duration: cfg.get("swe.rain_duration")?,
    };
    let count: usize = cfg.get("count")?;
    if count == 0 {
        return Err(Error::Usage("count must be at least 1".into()));
    }
    generate_dataset(&spec, count, cfg.get("seed")?, out)?;
    Ok(())
}

fn momentum_settings(cfg: &RunConfig, shape: &[usize]) -> Result<(Vec<usize>, InvariantConvP4)> {
    let padding: Vec<usize> = list(cfg, "momentum.padding")?;
    let padding = if padding.is_empty() { MomentumProjection::default_padding(shape) } else { padding };
    let w: Vec<f64> = cfg.get_list("momentum.w_inv")?;
    if w.len() != 3 {
        return Err(Error::Usage("momentum.w_inv needs three values (center, edge, corner)".into()));
    }
    Ok((padding, InvariantConvP4::new(w[0], w[1], w[2])))
}

fn mass_mode(cfg: &RunConfig) -> Result<MassMode> {
    match cfg.get::<String>("mass_mode")?.as_str() {
        "spatial" => Ok(MassMode::Spatial2d),
        "spatiotemporal" => Ok(MassMode::Spatiotemporal3d),
        other => Err(Error::Usage(format!("unknown mass_mode '{other}' (expected spatial|spatiotemporal)"))),
    }
}

/// Make the first axis temporal, keeping unit extents.
fn with_time_axis(field: RealField) -> Result<RealField> {
    let mut axes = field.grid().axes().to_vec();
    if axes.is_empty() {
        return Err(Error::Shape("field has no axes".into()));
    }
    axes[0] = Axis::temporal("t", axes[0].size, axes[0].extent);
    let grid = GridSpec::new(axes)?;
    field.with_grid(grid)
}

fn cmd_project(cfg: &RunConfig, out: &Path) -> Result<()> {
    let selector: Selector = cfg.get::<String>("selector")?.parse()?;
    let mode = mass_mode(cfg)?;
    let mut field = crate::spectral::read_fld(required(cfg, "input")?)?;
    let per_frame: bool = cfg.get("trajectory")?;
    if per_frame && mode == MassMode::Spatiotemporal3d {
        return Err(Error::Usage("trajectory = true projects frames separately; use mass_mode = spatial".into()));
    }
    if per_frame || mode == MassMode::Spatiotemporal3d {
        field = with_time_axis(field)?;
    }
    let frames = if per_frame { split_in_time(&field)? } else { vec![field] };
    let field = &frames[0];
    let params = match optional(cfg, "params") {
        Some(path) => FnoParams::load(path)?.projection,
        None => {
            let momentum = if selector.uses_momentum() {
                let shape: Vec<usize> = field.grid().spatial_axes().iter().map(|&a| field.grid().shape()[a]).collect();
                let (padding, w_inv) = momentum_settings(cfg, &shape)?;
                let mut m = MomentumProjection::unit(&shape, field.channels(), padding);
                m.w_inv = w_inv;
                Some(m)
            } else {
                None
            };
            ProjectionParams {
                mass: MassProjectionConfig { mode, spectral_conv: None },
                momentum,
            }
        }
    };
    let projected: Vec<RealField> = frames
        .iter()
        .map(|f| compose_projection(f, selector, &params))
        .collect::<Result<_>>()?;
    let path = out.join("projected.fld");
    if per_frame {
        write_frames(&projected, &path)
    } else {
        write_fld(&projected[0], &path)
    }
}

fn cond_values(names: &[String], meta: &TrajectoryMeta) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "dt" => Ok(meta.dt),
            "nu" => Ok(meta.nu),
            "length" => Ok(meta.length),
            other => Err(Error::Usage(format!("unknown conditioning feature '{other}' (expected dt|nu|length)"))),
        })
        .collect()
}

struct TrainingData {
    samples: Vec<Sample>,
    channels: usize,
}

fn load_training_data(cfg: &RunConfig, strategy: Strategy, t_in: usize) -> Result<TrainingData> {
    let dir = PathBuf::from(required(cfg, "dataset")?);
    let manifest = Manifest::read(&dir)?;
    let limit: usize = cfg.get("max_trajectories")?;
    let entries = if limit > 0 { &manifest.entries[..limit.min(manifest.entries.len())] } else { &manifest.entries[..] };
    let cond_names: Vec<String> = list(cfg, "cond")?;
    let mut channels: Vec<usize> = list(cfg, "channels")?;
    let mut samples = Vec::new();
    for meta in entries {
        let traj = load_trajectory(&dir, meta)?;
        if channels.is_empty() {
            channels = (0..traj.channels()).collect();
        }
        if let Some(&c) = channels.iter().find(|&&c| c >= traj.channels()) {
            return Err(Error::Usage(format!("channel {c} not present in {}", meta.file)));
        }
        let cond = cond_values(&cond_names, meta)?;
        match strategy {
            Strategy::Markov => samples.extend(markov_samples(&traj, &channels, t_in, &cond)?),
            Strategy::OneShot => {
                let frames = traj.grid().axes()[0].size;
                let t_out: usize = cfg.get("t_out")?;
                let t_out = if t_out == 0 { frames.saturating_sub(t_in) } else { t_out };
                samples.push(one_shot_sample(&traj, &channels, t_in, t_out, &cond)?);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("dataset holds no trajectories".into()));
    }
    Ok(TrainingData {
        samples,
        channels: channels.len(),
    })
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let kind = cfg.get::<String>("model_kind")?;
    let seed: u64 = cfg.get("seed")?;
    match kind.as_str() {
        "fno" | "pcno" => train_surrogate(cfg, out, kind == "pcno", seed),
        "diffpcno" => train_denoiser(cfg, out, Variant::DiffPcno, seed),
        "refiner" => train_denoiser(cfg, out, Variant::Refiner, seed),
        other => Err(Error::Usage(format!("unknown model kind '{other}' (expected fno|pcno|diffpcno|refiner)"))),
    }
}

fn train_surrogate(cfg: &RunConfig, out: &Path, projected: bool, seed: u64) -> Result<()> {
    let strategy: Strategy = cfg.get::<String>("strategy")?.parse()?;
    let t_in: usize = cfg.get("t_in")?;
    let data = load_training_data(cfg, strategy, t_in)?;
    let first = &data.samples[0];
    let grid = first.input.grid();
    let selector: Selector = cfg.get::<String>("selector")?.parse()?;
    if projected == (selector == Selector::None) {
        return Err(Error::Usage("fno models take selector none; pcno models need a projection".into()));
    }
    let hyper = FnoHyper {
        in_ch: first.input.channels(),
        cond_ch: first.cond.len(),
        out_ch: data.channels,
        width: cfg.get("width")?,
        modes: vec![cfg.get("modes")?; grid.ndim()],
        layers: cfg.get("layers")?,
        activation: cfg.get::<String>("activation")?.parse::<Activation>()?,
        time_padding: cfg.get("time_padding")?,
    };
    let mut init_rng = rng::stream(seed, "train/init");
    let w_spe: Vec<usize> = list(cfg, "w_spe_modes")?;
    let shape: Vec<usize> = grid.spatial_axes().iter().map(|&a| grid.shape()[a]).collect();
    let momentum = if selector.uses_momentum() {
        let (padding, w_inv) = momentum_settings(cfg, &shape)?;
        Some((shape.as_slice(), padding, w_inv))
    } else {
        None
    };
    let params = FnoParams::init(hyper, &mut init_rng)?.with_projection(
        selector,
        mass_mode(cfg)?,
        (!w_spe.is_empty()).then_some(w_spe.as_slice()),
        momentum,
        &mut init_rng,
    )?;
    let tc = TrainConfig {
        epochs: cfg.get("epochs")?,
        batch: cfg.get("batch")?,
        lr: cfg.get("lr")?,
        weight_decay: cfg.get("weight_decay")?,
        strategy,
        seed,
    };
    let report = train(&params, &data.samples, &tc)?;
    report.params.save(out.join("model.bin"))?;
    write_losses(&out.join("loss.csv"), &report.losses)
}

fn train_denoiser(cfg: &RunConfig, out: &Path, variant: Variant, seed: u64) -> Result<()> {
    let pcno_path = optional(cfg, "pcno").ok_or_else(|| Error::Usage(format!("{variant} training needs a frozen --pcno model")))?;
    let pcno = FnoParams::load(pcno_path)?;
    let out_ch = pcno.hyper.out_ch;
    if pcno.hyper.in_ch % out_ch != 0 {
        return Err(Error::Usage("surrogate input channels must be a multiple of its outputs".into()));
    }
    let data = load_training_data(cfg, Strategy::Markov, pcno.hyper.in_ch / out_ch)?;
    if data.channels != out_ch {
        return Err(Error::Usage(format!("dataset provides {} channels, surrogate predicts {out_ch}", data.channels)));
    }
    let samples: Vec<CtSample> = data
        .samples
        .iter()
        .map(|s| {
            Ok(CtSample {
                u_hat: predict(&pcno, &s.input, &s.cond)?,
                u_t: s.input.clone(),
                y: s.target.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let normalizer = fit_normalizer(&samples, variant)?;
    let dim = samples[0].y.data().len();
    let cond_dim = samples[0].cond().len();
    let den = ToyDenoiser::new(dim, cond_dim, cfg.get("hidden")?, cfg.get("embed")?, &mut rng::stream(seed, "ct/init"))?;
    let ct = CtConfig {
        epochs: cfg.get("epochs")?,
        batch: cfg.get("batch")?,
        lr: cfg.get("lr")?,
        weight_decay: cfg.get("weight_decay")?,
        huber_c: optional(cfg, "huber_c").map(|_| cfg.get("huber_c")).transpose()?,
        s0: cfg.get("s0")?,
        s1: cfg.get("s1")?,
        seed,
    };
    let sched = NoiseSchedule::default();
    let report = train_consistency(&den, &samples, variant, &normalizer, &sched, &ct)?;
    let model = DenoiserModel {
        denoiser: report.denoiser,
        normalizer,
        variant,
        sched,
    };
    model.save(out.join("model.bin"))?;
    write_losses(&out.join("loss.csv"), &report.losses)
}

fn write_frames(frames: &[RealField], path: &Path) -> Result<()> {
    write_fld(&stack_in_time(frames, 1.0)?, path)
}

/// Initial state for a surrogate: either a ready input field or a `[C, T, space...]`
/// trajectory, from which the window starting at `init_frame` is taken.
fn initial_state(cfg: &RunConfig, params: &FnoParams) -> Result<RealField> {
    let path = required(cfg, "init")?;
    let tensor = read_tensor(path)?;
    let ndim = params.hyper.modes.len();
    if tensor.dims.len() == ndim + 1 {
        return tensor.into_field();
    }
    if tensor.dims.len() != ndim + 2 {
        return Err(Error::Shape(format!("{path}: dims {:?} fit neither a state nor a trajectory", tensor.dims)));
    }
    let traj = with_time_axis(tensor.into_field()?)?;
    let mut channels: Vec<usize> = list(cfg, "channels")?;
    if channels.is_empty() {
        channels = (0..traj.channels()).collect();
    }
    let out_ch = params.hyper.out_ch;
    if out_ch == 0 || params.hyper.in_ch % out_ch != 0 {
        return Err(Error::Usage("surrogate input channels must be a multiple of its outputs".into()));
    }
    markov_window(&traj, &channels, cfg.get("init_frame")?, params.hyper.in_ch / out_ch)
}

fn cmd_rollout(cfg: &RunConfig, out: &Path) -> Result<()> {
    let params = FnoParams::load(required(cfg, "model")?)?;
    let cond: Vec<f64> = list(cfg, "cond")?;
    let init = initial_state(cfg, &params)?;
    let selector = match optional(cfg, "selector") {
        Some(s) => s.parse()?,
        None => params.selector,
    };
    let traj = rollout(&params, &init, &cond, cfg.get("steps")?, selector)?;
    write_frames(&traj, &out.join("rollout.fld"))
}

fn cmd_sample(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = DenoiserModel::load(required(cfg, "model")?)?;
    let pcno = FnoParams::load(required(cfg, "pcno")?)?;
    let cond: Vec<f64> = list(cfg, "cond")?;
    let init = initial_state(cfg, &pcno)?;
    let tp: Vec<f64> = cfg.get_list("time_points")?;
    let count: usize = cfg.get("count")?;
    if count == 0 {
        return Err(Error::Usage("count must be at least 1".into()));
    }
    let seed: u64 = cfg.get("seed")?;
    let mut draws = Vec::with_capacity(count);
    let mut deterministic = None;
    for j in 0..count {
        let step = diffpcno_step(&pcno, &model, &init, &cond, &tp, &mut rng::stream(seed, &format!("sample/{j}")))?;
        draws.push(step.prediction);
        deterministic = Some(step.deterministic);
    }
    write_frames(&draws, &out.join("sample.fld"))?;
    if let Some(d) = deterministic {
        write_fld(&d, out.join("deterministic.fld"))?;
    }
    Ok(())
}

fn cmd_uncertainty(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pcno = FnoParams::load(required(cfg, "model")?)?;
    let denoiser = optional(cfg, "denoiser").map(DenoiserModel::load).transpose()?;
    let cond: Vec<f64> = list(cfg, "cond")?;
    let init = initial_state(cfg, &pcno)?;
    let ec = EnsembleConfig {
        steps: cfg.get("steps")?,
        n_traj: cfg.get("n_traj")?,
        time_points: cfg.get_list("time_points")?,
        seed: cfg.get("seed")?,
    };
    let e = uncertainty_ensemble(&pcno, denoiser.as_ref(), &init, &cond, &ec)?;
    write_frames(&e.mean, &out.join("mean.fld"))?;
    write_frames(&e.std, &out.join("std.fld"))
}

fn fld_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".fld") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Frames of a `[C, T, space...]` trajectory file, restricted to `channels` if given.
fn read_frames(path: &Path, channels: &[usize]) -> Result<Vec<RealField>> {
    let t = read_tensor(path)?;
    if t.dims.len() < 3 {
        return Err(Error::Format(format!("{}: expected [channels, time, space...]", path.display())));
    }
    let traj = with_time_axis(t.into_field()?)?;
    if channels.is_empty() {
        return split_in_time(&traj);
    }
    let frames = traj.grid().axes()[0].size;
    (0..frames).map(|f| markov_window(&traj, channels, f, 1)).collect()
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pred_dir = PathBuf::from(required(cfg, "pred")?);
    let truth_dir = PathBuf::from(required(cfg, "truth")?);
    let wanted: Vec<String> = cfg.get_list("metrics")?;
    let gammas: Vec<f64> = list(cfg, "thresholds")?;
    let corr: Vec<f64> = list(cfg, "corr_thresholds")?;
    let channel: usize = cfg.get("channel")?;
    let offset: usize = cfg.get("truth_offset")?;
    let truth_channels: Vec<usize> = list(cfg, "truth_channels")?;
    let names = fld_files(&truth_dir)?;
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no .fld files in {}", truth_dir.display())));
    }
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for name in &names {
        let p = pred_dir.join(name);
        if !p.exists() {
            return Err(Error::InvalidArgument(format!("no prediction for trajectory {name}")));
        }
        let pf = read_frames(&p, &[])?;
        let tf = read_frames(&truth_dir.join(name), &truth_channels)?;
        if tf.len() < offset + pf.len() {
            return Err(Error::Shape(format!(
                "{name}: {} predicted steps after offset {offset} exceed {} reference steps",
                pf.len(),
                tf.len()
            )));
        }
        truths.push(tf[offset..offset + pf.len()].to_vec());
        preds.push(pf);
    }
    let steps = preds[0].len();
    if preds.iter().any(|p| p.len() != steps) {
        return Err(Error::Shape("trajectories differ in length".into()));
    }
    let mut report = MetricReport::new(truths[0][0].grid().shape());
    for g in &gammas {
        report.set_threshold(&format!("csi.{g}"), *g);
    }
    for s in 0..steps {
        let p: Vec<RealField> = preds.iter().map(|t| t[s].clone()).collect();
        let t: Vec<RealField> = truths.iter().map(|t| t[s].clone()).collect();
        for m in &wanted {
            match m.as_str() {
                "nrmse" => report.push("nrmse", metrics::nrmse(&p, &t)?),
                "mse" => report.push("mse", metrics::mse(&p, &t)?),
                "pearson" => {
                    let r: f64 = p.iter().zip(&t).map(|(a, b)| metrics::pearson(a, b)).sum::<Result<f64>>()?;
                    report.push("pearson", r / p.len() as f64);
                }
                "divergence" => {
                    let d: f64 = p.iter().map(metrics::divergence_loss).sum::<Result<f64>>()?;
                    report.push("divergence", d / p.len() as f64);
                }
                "momentum" => {
                    let d: f64 = p.iter().zip(&t).map(|(a, b)| metrics::momentum_loss(a, b)).sum::<Result<f64>>()?;
                    report.push("momentum", d / p.len() as f64);
                }
                "csi" => {
                    for &g in &gammas {
                        let mut total = CsiCounts::default();
                        for (a, b) in p.iter().zip(&t) {
                            let c = metrics::csi_counts(&a.select_channels(channel, 1)?, &b.select_channels(channel, 1)?, g)?;
                            total.tp += c.tp;
                            total.fp += c.fp;
                            total.fn_ += c.fn_;
                        }
                        report.push(&format!("csi.{g}"), total.score());
                    }
                }
                other => return Err(Error::Usage(format!("unknown metric '{other}'"))),
            }
        }
    }
    if wanted.iter().any(|m| m == "pearson") {
        let r = metrics::mean_correlation_per_step(&preds, &truths)?;
        for c in &corr {
            let step = metrics::high_corr_step(&r, *c).map_or_else(|| "none".to_string(), |s| s.to_string());
            report.set_summary(&format!("high_corr_step.{c}"), step);
        }
    }
    let text_path = out.join("metrics.txt");
    fs::write(&text_path, report.to_text()).map_err(|e| Error::io(&text_path, e))?;
    let csv_path = out.join("metrics.csv");
    fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))
}
