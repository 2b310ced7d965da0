//! Consistency-training losses and the training loop for the residual (DiffPCNO) and
//! state (refiner) variants.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::denoiser::ToyDenoiser;
use super::normalizer::ResidualNormalizer;
use super::schedule::{curriculum_n, default_huber_c, pseudo_huber_grad, sample_index, timestep, Curriculum, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::RealField;
use crate::surrogate::{cosine_lr, AdamW, LOSS_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Noise the normalized residual `y - u_hat`.
    DiffPcno,
    /// Noise the normalized state `y`.
    Refiner,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffpcno" => Ok(Variant::DiffPcno),
            "refiner" => Ok(Variant::Refiner),
            other => Err(Error::Usage(format!("unknown denoiser variant '{other}' (expected diffpcno|refiner)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DiffPcno => "diffpcno",
            Variant::Refiner => "refiner",
        })
    }
}

/// Current state, frozen surrogate prediction and ground truth of the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct CtSample {
    pub u_t: RealField,
    pub u_hat: RealField,
    pub y: RealField,
}

impl CtSample {
    /// Denoiser conditioning: `u_t` followed by `u_hat`.
    pub fn cond(&self) -> Vec<f64> {
        conditioning(&self.u_t, &self.u_hat)
    }
}

pub(crate) fn conditioning(u_t: &RealField, u_hat: &RealField) -> Vec<f64> {
    let mut c = u_t.data().to_vec();
    c.extend_from_slice(u_hat.data());
    c
}

/// The clean quantity the denoiser learns to produce, in normalized units.
pub fn ct_target(s: &CtSample, variant: Variant, normalizer: &ResidualNormalizer) -> Result<Vec<f64>> {
    let x = match variant {
        Variant::DiffPcno => s.y.lincomb(1.0, &s.u_hat, -1.0)?,
        Variant::Refiner => s.y.clone(),
    };
    Ok(normalizer.normalize(&x)?.into_data())
}

/// Fit the normalizer on the quantity the variant noises.
pub fn fit_normalizer(samples: &[CtSample], variant: Variant) -> Result<ResidualNormalizer> {
    let fields: Vec<RealField> = samples
        .iter()
        .map(|s| match variant {
            Variant::DiffPcno => s.y.lincomb(1.0, &s.u_hat, -1.0),
            Variant::Refiner => Ok(s.y.clone()),
        })
        .collect::<Result<_>>()?;
    ResidualNormalizer::fit(&fields)
}

/// Random choices of one loss evaluation: index `i` and the shared noise `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtDraw {
    pub index: usize,
    pub z: Vec<f64>,
}

/// Index then noise, sample by sample.
pub fn draw_ct(count: usize, dim: usize, n: usize, sched: &NoiseSchedule, rng: &mut impl Rng) -> Result<Vec<CtDraw>> {
    (0..count)
        .map(|_| {
            let index = sample_index(n, sched, rng)?;
            let z = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            Ok(CtDraw { index, z })
        })
        .collect()
}

/// Loss settings shared by both variants.
#[derive(Debug, Clone, PartialEq)]
pub struct CtSettings {
    pub sched: NoiseSchedule,
    pub huber_c: f64,
    pub variant: Variant,
}

/// Mean of `lambda(t_i) d(f(x + t_{i+1} z, t_{i+1}), f(x + t_i z, t_i))` over the batch,
/// with the second branch treated as a constant, and its parameter gradient.
pub fn ct_loss_with_draws(
    den: &ToyDenoiser,
    batch: &[CtSample],
    draws: &[CtDraw],
    n: usize,
    settings: &CtSettings,
    normalizer: &ResidualNormalizer,
) -> Result<(f64, ToyDenoiser)> {
    if batch.is_empty() || batch.len() != draws.len() {
        return Err(Error::InvalidArgument(format!("{} samples with {} draws", batch.len(), draws.len())));
    }
    let sched = &settings.sched;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = den.zeros_like();
    let mut loss = 0.0;
    for (s, d) in batch.iter().zip(draws) {
        if d.index == 0 || d.index >= n {
            return Err(Error::InvalidArgument(format!("index {} outside 1..{n}", d.index)));
        }
        let x0 = ct_target(s, settings.variant, normalizer)?;
        if d.z.len() != x0.len() {
            return Err(Error::Shape("noise does not match the target size".into()));
        }
        let cond = s.cond();
        let (t_lo, t_hi) = (timestep(d.index, n, sched)?, timestep(d.index + 1, n, sched)?);
        let noised = |t: f64| -> Vec<f64> { x0.iter().zip(&d.z).map(|(a, z)| a + t * z).collect() };
        let (online, tape) = den.forward_with_tape(&noised(t_hi), t_hi, &cond, sched)?;
        let target = den.forward(&noised(t_lo), t_lo, &cond, sched)?;
        let lambda = 1.0 / (t_hi - t_lo);
        let (dist, g) = pseudo_huber_grad(&online, &target, settings.huber_c)?;
        loss += lambda * dist * scale;
        let dy: Vec<f64> = g.iter().map(|v| v * lambda * scale).collect();
        den.backward(&tape, &dy, &mut grad);
    }
    Ok((loss, grad))
}

fn ct_loss(
    den: &ToyDenoiser,
    batch: &[CtSample],
    step: (usize, &Curriculum),
    settings: &CtSettings,
    normalizer: &ResidualNormalizer,
    rng: &mut impl Rng,
) -> Result<(f64, ToyDenoiser)> {
    let n = curriculum_n(step.0, step.1)?;
    let draws = draw_ct(batch.len(), den.dim, n, &settings.sched, rng)?;
    ct_loss_with_draws(den, batch, &draws, n, settings, normalizer)
}

/// Residual-target loss at training step `k` of the curriculum.
pub fn ct_loss_diffpcno(
    den: &ToyDenoiser,
    batch: &[CtSample],
    k: usize,
    cur: &Curriculum,
    sched: &NoiseSchedule,
    huber_c: f64,
    normalizer: &ResidualNormalizer,
    rng: &mut impl Rng,
) -> Result<(f64, ToyDenoiser)> {
    let settings = CtSettings {
        sched: *sched,
        huber_c,
        variant: Variant::DiffPcno,
    };
    ct_loss(den, batch, (k, cur), &settings, normalizer, rng)
}

/// State-target loss at training step `k` of the curriculum.
pub fn ct_loss_refiner(
    den: &ToyDenoiser,
    batch: &[CtSample],
    k: usize,
    cur: &Curriculum,
    sched: &NoiseSchedule,
    huber_c: f64,
    normalizer: &ResidualNormalizer,
    rng: &mut impl Rng,
) -> Result<(f64, ToyDenoiser)> {
    let settings = CtSettings {
        sched: *sched,
        huber_c,
        variant: Variant::Refiner,
    };
    ct_loss(den, batch, (k, cur), &settings, normalizer, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Defaults to `0.00054 sqrt(D)`.
    pub huber_c: Option<f64>,
    pub s0: usize,
    pub s1: usize,
    pub seed: u64,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            epochs: 10,
            batch: 16,
            lr: 1e-4,
            weight_decay: 0.0,
            huber_c: None,
            s0: 10,
            s1: 1280,
            seed: 0,
        }
    }
}

/// Trained denoiser plus the per-step loss curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CtReport {
    pub denoiser: ToyDenoiser,
    pub losses: Vec<f64>,
}

/// Single-threaded AdamW loop; shuffling and noise come from the `ct/shuffle` and
/// `ct/noise` streams.
pub fn train_consistency(
    den: &ToyDenoiser,
    samples: &[CtSample],
    variant: Variant,
    normalizer: &ResidualNormalizer,
    sched: &NoiseSchedule,
    cfg: &CtConfig,
) -> Result<CtReport> {
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("batch and lr must be positive".into()));
    }
    let mut den = den.clone();
    if cfg.epochs == 0 {
        return Ok(CtReport { denoiser: den, losses: Vec::new() });
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no consistency-training samples".into()));
    }
    let settings = CtSettings {
        sched: *sched,
        huber_c: cfg.huber_c.unwrap_or_else(|| default_huber_c(den.dim)),
        variant,
    };
    let total = cfg.epochs * samples.len().div_ceil(cfg.batch);
    let cur = Curriculum {
        s0: cfg.s0,
        s1: cfg.s1,
        total_steps: total,
    };
    let mut shuffle = rng::stream(cfg.seed, "ct/shuffle");
    let mut noise = rng::stream(cfg.seed, "ct/noise");
    let mut opt = AdamW::new(den.num_params(), cfg.weight_decay);
    let mut flat = den.flatten();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(total);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<CtSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let k = losses.len();
            let (loss, grad) = ct_loss(&den, &batch, (k, &cur), &settings, normalizer, &mut noise)?;
            if !loss.is_finite() || loss > LOSS_LIMIT {
                return Err(Error::Numerical(format!("consistency training diverged at step {k}: loss {loss:.3e}")));
            }
            losses.push(loss);
            opt.step(&mut flat, &grad.flatten(), cosine_lr(cfg.lr, k, total));
            den.set_flat(&flat)?;
        }
    }
    Ok(CtReport { denoiser: den, losses })
}
