//! Multistep sampling, one-step corrected forecasts and ensemble statistics.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::ct::{conditioning, Variant};
use super::denoiser::ToyDenoiser;
use super::normalizer::ResidualNormalizer;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::RealField;
use crate::surrogate::{advance_window, predict, FnoParams, ModelFile};

fn check_time_points(tp: &[f64], sched: &NoiseSchedule) -> Result<()> {
    if tp.is_empty() {
        return Err(Error::InvalidArgument("no sampling time points".into()));
    }
    if tp.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument(format!("time points must strictly decrease, got {tp:?}")));
    }
    if tp.iter().any(|&t| !(t > sched.t_min && t <= sched.t_max)) {
        return Err(Error::InvalidArgument(format!(
            "time points must lie in ({}, {}]",
            sched.t_min, sched.t_max
        )));
    }
    Ok(())
}

/// `x = f(T z, T)`, then for each later `t_n`: `x = f(x + sqrt(t_n^2 - t_min^2) z, t_n)`.
/// Returns the sample in normalized units.
pub fn sample_multistep(
    den: &ToyDenoiser,
    cond: &[f64],
    time_points: &[f64],
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_time_points(time_points, sched)?;
    let mut noise = |scale: f64| -> Vec<f64> { (0..den.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect() };
    let t_top = time_points[0];
    let mut x = den.forward(&noise(t_top), t_top, cond, sched)?;
    for &t in &time_points[1..] {
        let sd = (t * t - sched.t_min * sched.t_min).sqrt();
        let z = noise(sd);
        let noised: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        x = den.forward(&noised, t, cond, sched)?;
    }
    Ok(x)
}

/// Trained denoiser with the statistics and schedule needed to sample from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub denoiser: ToyDenoiser,
    pub normalizer: ResidualNormalizer,
    pub variant: Variant,
    pub sched: NoiseSchedule,
}

impl DenoiserModel {
    /// One correction draw: the residual (DiffPCNO) or the refined state (refiner).
    pub fn sample(&self, u_t: &RealField, u_hat: &RealField, time_points: &[f64], rng: &mut impl Rng) -> Result<RealField> {
        let x = sample_multistep(&self.denoiser, &conditioning(u_t, u_hat), time_points, &self.sched, rng)?;
        let x = RealField::new(u_hat.grid().clone(), u_hat.channels(), x)?;
        match self.variant {
            Variant::DiffPcno => self.normalizer.denormalize_clamped(&x),
            Variant::Refiner => self.normalizer.denormalize(&x),
        }
    }

    pub fn to_model_file(&self) -> ModelFile {
        let d = &self.denoiser;
        let s = &self.sched;
        let mut m = ModelFile::new("denoiser");
        m.set("variant", self.variant);
        m.set("dim", d.dim);
        m.set("cond_dim", d.cond_dim);
        m.set("hidden", d.hidden);
        m.set("embed", d.embed);
        for (k, v) in [
            ("t_min", s.t_min),
            ("t_max", s.t_max),
            ("rho", s.rho),
            ("sigma_data", s.sigma_data),
            ("p_mean", s.p_mean),
            ("p_std", s.p_std),
        ] {
            m.set(k, v);
        }
        for (name, v) in d.groups() {
            m.push_real(name, v);
        }
        m.push_real("norm.min", &self.normalizer.min);
        m.push_real("norm.max", &self.normalizer.max);
        m
    }

    pub fn from_model_file(m: &ModelFile) -> Result<Self> {
        if m.kind()? != "denoiser" {
            return Err(Error::Format(format!("expected a denoiser model, found '{}'", m.kind()?)));
        }
        let sched = NoiseSchedule {
            t_min: m.parsed("t_min")?,
            t_max: m.parsed("t_max")?,
            rho: m.parsed("rho")?,
            sigma_data: m.parsed("sigma_data")?,
            p_mean: m.parsed("p_mean")?,
            p_std: m.parsed("p_std")?,
        };
        let mut den = ToyDenoiser {
            dim: m.parsed("dim")?,
            cond_dim: m.parsed("cond_dim")?,
            hidden: m.parsed("hidden")?,
            embed: m.parsed("embed")?,
            w1: Vec::new(),
            b1: Vec::new(),
            w2: Vec::new(),
            b2: Vec::new(),
            w3: Vec::new(),
            b3: Vec::new(),
        };
        let (d, h) = (den.dim, den.hidden);
        let fan = d + den.cond_dim + den.embed;
        for (name, slot) in den.groups_mut() {
            let len = match name {
                "w1" => h * fan,
                "b1" | "b2" => h,
                "w2" => h * h,
                "w3" => d * h,
                _ => d,
            };
            *slot = m.real_block(name, len)?;
        }
        let channels = m.block("norm.min")?.data.len();
        let normalizer = ResidualNormalizer::new(m.real_block("norm.min", channels)?, m.real_block("norm.max", channels)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(DenoiserModel {
            denoiser: den,
            normalizer,
            variant: m.get("variant")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?,
            sched,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_model_file().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DenoiserModel::from_model_file(&ModelFile::read(path)?)
    }
}

/// A corrected forecast together with the surrogate prediction it started from.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedStep {
    pub prediction: RealField,
    pub deterministic: RealField,
}

/// Surrogate step followed by one correction draw.
pub fn diffpcno_step(
    pcno: &FnoParams,
    model: &DenoiserModel,
    u_t: &RealField,
    scalars: &[f64],
    time_points: &[f64],
    rng: &mut impl Rng,
) -> Result<CorrectedStep> {
    let u_hat = predict(pcno, u_t, scalars)?;
    let draw = model.sample(u_t, &u_hat, time_points, rng)?;
    let prediction = match model.variant {
        Variant::DiffPcno => u_hat.lincomb(1.0, &draw, 1.0)?,
        Variant::Refiner => draw,
    };
    Ok(CorrectedStep {
        prediction,
        deterministic: u_hat,
    })
}

/// Per-step pointwise mean and sample standard deviation of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub mean: Vec<RealField>,
    pub std: Vec<RealField>,
}

/// Options for [`uncertainty_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub steps: usize,
    pub n_traj: usize,
    pub time_points: Vec<f64>,
    pub seed: u64,
}

/// Independent stochastic rollouts, one correction draw per step; trajectory `j` uses
/// the stream `ensemble/j`. Without a denoiser every member is the plain rollout.
pub fn uncertainty_ensemble(
    pcno: &FnoParams,
    model: Option<&DenoiserModel>,
    u0: &RealField,
    scalars: &[f64],
    cfg: &EnsembleConfig,
) -> Result<Ensemble> {
    if cfg.n_traj < 2 || cfg.steps == 0 {
        return Err(Error::InvalidArgument("ensembles need at least 2 trajectories and 1 step".into()));
    }
    let members: Vec<Vec<RealField>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(cfg.seed, &format!("ensemble/{j}"));
            let mut state = u0.clone();
            let mut frames = Vec::with_capacity(cfg.steps);
            for _ in 0..cfg.steps {
                let next = match model {
                    Some(m) => diffpcno_step(pcno, m, &state, scalars, &cfg.time_points, &mut r)?.prediction,
                    None => predict(pcno, &state, scalars)?,
                };
                state = advance_window(&state, &next)?;
                frames.push(next);
            }
            Ok(frames)
        })
        .collect::<Result<_>>()?;
    ensemble_stats(&members)
}

/// Mean and `n - 1` standard deviation per step over `members[trajectory][step]`.
pub fn ensemble_stats(members: &[Vec<RealField>]) -> Result<Ensemble> {
    let n = members.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ensemble statistics need 2 members".into()));
    }
    let steps = members[0].len();
    let mut mean = Vec::with_capacity(steps);
    let mut std = Vec::with_capacity(steps);
    // Deviations from the first member: identical members give an exact mean and zero spread.
    for s in 0..steps {
        let first = &members[0][s];
        let len = first.data().len();
        let (mut sum, mut sq) = (vec![0.0; len], vec![0.0; len]);
        for traj in members {
            traj[s].check_same_shape(first, "ensemble member")?;
            for ((a, b), (x, x0)) in sum.iter_mut().zip(sq.iter_mut()).zip(traj[s].data().iter().zip(first.data())) {
                let d = x - x0;
                *a += d;
                *b += d * d;
            }
        }
        let nf = n as f64;
        let m = first.data().iter().zip(&sum).map(|(x0, a)| x0 + a / nf).collect();
        let sd = sum
            .iter()
            .zip(&sq)
            .map(|(a, b)| ((b - a * a / nf).max(0.0) / (nf - 1.0)).sqrt())
            .collect();
        mean.push(RealField::new(first.grid().clone(), first.channels(), m)?);
        std.push(RealField::new(first.grid().clone(), first.channels(), sd)?);
    }
    Ok(Ensemble { mean, std })
}
