//! Fourier neural operator with optional physics-consistent output projection.
//!
//! Forward and backward passes are hand-written; gradients of every learnable group,
//! projection weights included, come from [`backward`].

mod container;
mod model;
mod optim;
mod params;
mod train;

pub use container::ModelFile;
pub use model::{
    backward, batch_loss_and_grad, fno_forward, forward_with_tape, loss_relative_mse, pcno_forward, predict,
    sample_loss_and_grad, Sample, Tape,
};
pub use optim::{cosine_lr, AdamW};
pub use params::{Activation, FnoHyper, FnoParams, ParamGroup};
pub use train::{
    advance_window, markov_samples, markov_window, one_shot_sample, rollout, train, Strategy, TrainConfig, TrainReport, LOSS_LIMIT,
};

#[cfg(test)]
mod tests;
