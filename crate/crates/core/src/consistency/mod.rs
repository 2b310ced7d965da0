//! Consistency-model residual correction.
//!
//! A frozen surrogate predicts `u_hat`; a small denoiser trained by consistency
//! training learns either the residual `y - u_hat` (DiffPCNO) or the state `y`
//! (refiner). Sampling draws corrections in a few denoising steps and ensembles of
//! stochastic rollouts give pointwise uncertainty.

mod ct;
mod denoiser;
mod normalizer;
mod sampling;
mod schedule;

pub use ct::{
    ct_loss_diffpcno, ct_loss_refiner, ct_loss_with_draws, ct_target, draw_ct, fit_normalizer, train_consistency, CtConfig,
    CtDraw, CtReport, CtSample, CtSettings, Variant,
};
pub use denoiser::{DenoiserTape, ToyDenoiser};
pub use normalizer::ResidualNormalizer;
pub use sampling::{
    diffpcno_step, ensemble_stats, sample_multistep, uncertainty_ensemble, CorrectedStep, DenoiserModel, Ensemble,
    EnsembleConfig,
};
pub use schedule::{
    curriculum_n, default_huber_c, index_weights, pseudo_huber, pseudo_huber_grad, sample_index, skip_out_coeffs, timestep,
    Curriculum, NoiseSchedule, DEFAULT_TIME_POINTS,
};

#[cfg(test)]
mod tests;
