//! Training loops, sample assembly for the two strategies, and rollout.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::model::{batch_loss_and_grad, pcno_forward, Sample};
use super::optim::{cosine_lr, AdamW};
use super::params::FnoParams;
use crate::error::{Error, Result};
use crate::projection::Selector;
use crate::rng;
use crate::solvers::dataset::{split_in_time, stack_in_time};
use crate::spectral::RealField;

pub const LOSS_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// One step ahead from ground-truth frames.
    Markov,
    /// Whole spatiotemporal window in one pass.
    OneShot,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markov" => Ok(Strategy::Markov),
            "one_shot" => Ok(Strategy::OneShot),
            other => Err(Error::Usage(format!("unknown strategy '{other}' (expected markov|one_shot)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Markov => "markov",
            Strategy::OneShot => "one_shot",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch: 8,
            lr: 1e-3,
            weight_decay: 1e-4,
            strategy: Strategy::Markov,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: FnoParams,
    /// Mean batch loss of every optimizer step.
    pub losses: Vec<f64>,
}

/// Markov samples from a `(t, space...)` trajectory: `t_in` consecutive frames of the
/// chosen channels (oldest first) predict the next frame.
pub fn markov_samples(traj: &RealField, channels: &[usize], t_in: usize, cond: &[f64]) -> Result<Vec<Sample>> {
    let frames = select(split_in_time(traj)?, channels)?;
    if t_in == 0 || frames.len() <= t_in {
        return Err(Error::InvalidArgument(format!(
            "{} frames cannot feed {t_in} input frames plus a target",
            frames.len()
        )));
    }
    (t_in..frames.len())
        .map(|s| {
            Ok(Sample {
                input: stack_window(&frames[s - t_in..s])?,
                cond: cond.to_vec(),
                target: frames[s].clone(),
            })
        })
        .collect()
}

/// Surrogate input built from frames `start .. start + t_in` of a trajectory, the same
/// layout `markov_samples` produces.
pub fn markov_window(traj: &RealField, channels: &[usize], start: usize, t_in: usize) -> Result<RealField> {
    let frames = select(split_in_time(traj)?, channels)?;
    if t_in == 0 || start + t_in > frames.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames hold no {t_in}-frame window at frame {start}",
            frames.len()
        )));
    }
    stack_window(&frames[start..start + t_in])
}

fn stack_window(frames: &[RealField]) -> Result<RealField> {
    RealField::stack(&frames.iter().collect::<Vec<_>>())
}

/// One-shot sample: the first `t_in` frames, broadcast over the `t_out` output times,
/// predict frames `t_in .. t_in + t_out` on a `(t, space...)` grid.
pub fn one_shot_sample(traj: &RealField, channels: &[usize], t_in: usize, t_out: usize, cond: &[f64]) -> Result<Sample> {
    let frames = select(split_in_time(traj)?, channels)?;
    if t_in == 0 || t_out < 2 || frames.len() < t_in + t_out {
        return Err(Error::InvalidArgument(format!(
            "{} frames cannot cover {t_in} inputs and {t_out} outputs",
            frames.len()
        )));
    }
    let dt = traj.grid().axes()[0].extent / traj.grid().axes()[0].size as f64;
    let window: Vec<&RealField> = frames[..t_in].iter().collect();
    let input_frame = RealField::stack(&window)?;
    let input = stack_in_time(&vec![input_frame; t_out], dt)?;
    let target = stack_in_time(&frames[t_in..t_in + t_out], dt)?;
    Ok(Sample {
        input,
        cond: cond.to_vec(),
        target,
    })
}

fn select(frames: Vec<RealField>, channels: &[usize]) -> Result<Vec<RealField>> {
    frames
        .into_iter()
        .map(|f| {
            let parts: Vec<RealField> = channels.iter().map(|&c| f.select_channels(c, 1)).collect::<Result<_>>()?;
            RealField::stack(&parts.iter().collect::<Vec<_>>())
        })
        .collect()
}

fn check_strategy(samples: &[Sample], strategy: Strategy) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        let temporal = s.input.grid().temporal_axis().is_some();
        if temporal != (strategy == Strategy::OneShot) {
            return Err(Error::InvalidArgument(format!(
                "sample {i} does not match the {strategy} strategy"
            )));
        }
    }
    Ok(())
}

/// AdamW with cosine annealing over `epochs * ceil(len / batch)` steps. Batches are
/// reshuffled every epoch from the stream `train/shuffle`.
pub fn train(params: &FnoParams, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.batch == 0 || !(cfg.lr > 0.0) || cfg.weight_decay < 0.0 {
        return Err(Error::InvalidArgument("batch, lr must be positive and weight decay non-negative".into()));
    }
    let mut params = params.clone();
    if cfg.epochs == 0 {
        return Ok(TrainReport { params, losses: Vec::new() });
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    check_strategy(samples, cfg.strategy)?;
    let per_epoch = samples.len().div_ceil(cfg.batch);
    let total = cfg.epochs * per_epoch;
    let mut flat = params.flatten();
    let mut opt = AdamW::new(flat.len(), cfg.weight_decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, "train/shuffle");
    let mut losses = Vec::with_capacity(total);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&params, &batch)?;
            if !loss.is_finite() || loss > LOSS_LIMIT {
                return Err(Error::Numerical(format!(
                    "training diverged at step {}: loss {loss:.3e}",
                    losses.len()
                )));
            }
            losses.push(loss);
            opt.step(&mut flat, &grad, cosine_lr(cfg.lr, losses.len() - 1, total));
            params.set_flat(&flat)?;
        }
    }
    Ok(TrainReport { params, losses })
}

/// Feed predictions back as inputs for `steps` steps. With `k` stacked input frames,
/// the oldest frame is dropped and the prediction appended.
pub fn rollout(params: &FnoParams, u0: &RealField, cond: &[f64], steps: usize, selector: Selector) -> Result<Vec<RealField>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one step".into()));
    }
    let (inc, outc) = (params.hyper.in_ch, params.hyper.out_ch);
    if inc % outc != 0 {
        return Err(Error::Shape(format!("cannot feed {outc} output channels back into {inc} inputs")));
    }
    let mut state = u0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let pred = pcno_forward(params, &state, cond, selector)?;
        state = advance_window(&state, &pred)?;
        out.push(pred);
    }
    Ok(out)
}

/// Drop the oldest frame of a stacked input window and append `frame`.
pub fn advance_window(state: &RealField, frame: &RealField) -> Result<RealField> {
    let k = frame.channels();
    if state.channels() == k {
        return Ok(frame.clone());
    }
    let kept = state.select_channels(k, state.channels() - k)?;
    RealField::stack(&[&kept, frame])
}
