//! Noise schedule, discretization curriculum, index sampler and distance.

use rand::Rng;

use crate::error::{Error, Result};

/// Sampling time points used when none are given.
pub const DEFAULT_TIME_POINTS: [f64; 5] = [80.0, 24.4, 5.84, 0.9, 0.661];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub rho: f64,
    pub sigma_data: f64,
    pub p_mean: f64,
    pub p_std: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            t_min: 0.002,
            t_max: 80.0,
            rho: 7.0,
            sigma_data: 0.5,
            p_mean: -1.1,
            p_std: 2.0,
        }
    }
}

/// Karras time step `t_i`, `1 <= i <= n`; the endpoints are returned exactly.
pub fn timestep(i: usize, n: usize, sched: &NoiseSchedule) -> Result<f64> {
    if n < 2 || i == 0 || i > n {
        return Err(Error::InvalidArgument(format!("time step {i} of {n} is out of range")));
    }
    if i == 1 {
        return Ok(sched.t_min);
    }
    if i == n {
        return Ok(sched.t_max);
    }
    let inv = 1.0 / sched.rho;
    let (a, b) = (sched.t_min.powf(inv), sched.t_max.powf(inv));
    Ok((a + (i - 1) as f64 / (n - 1) as f64 * (b - a)).powf(sched.rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Curriculum {
    pub s0: usize,
    pub s1: usize,
    /// Total training steps `K`.
    pub total_steps: usize,
}

impl Curriculum {
    pub fn new(total_steps: usize) -> Self {
        Curriculum {
            s0: 10,
            s1: 1280,
            total_steps,
        }
    }

    /// Steps per doubling, `K' = floor(K / (log2 floor(s1 / s0) + 1))`, at least 1.
    pub fn stage_length(&self) -> usize {
        let ratio = (self.s1 / self.s0).max(1);
        let doublings = ratio.ilog2() as usize + 1;
        (self.total_steps / doublings).max(1)
    }
}

/// Discretization count `N(k) = min(s0 * 2^floor(k / K'), s1) + 1`.
pub fn curriculum_n(k: usize, cur: &Curriculum) -> Result<usize> {
    if cur.s0 == 0 || cur.s1 < cur.s0 {
        return Err(Error::InvalidArgument(format!("invalid curriculum {cur:?}")));
    }
    if k >= cur.total_steps {
        return Err(Error::InvalidArgument(format!("step {k} beyond {} training steps", cur.total_steps)));
    }
    let stage = k / cur.stage_length();
    let n = u32::try_from(stage)
        .ok()
        .and_then(|s| 1usize.checked_shl(s))
        .and_then(|p| cur.s0.checked_mul(p))
        .map_or(cur.s1, |v| v.min(cur.s1));
    Ok(n + 1)
}

/// Normalized lognormal weights `p(i)`, `i = 1..n-1` (index 0 holds `p(1)`).
pub fn index_weights(n: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("index sampler needs N >= 2, got {n}")));
    }
    let denom = std::f64::consts::SQRT_2 * sched.p_std;
    let cdf = |t: f64| libm::erf((t.ln() - sched.p_mean) / denom);
    let mut w = Vec::with_capacity(n - 1);
    let mut lo = cdf(timestep(1, n, sched)?);
    for i in 1..n {
        let hi = cdf(timestep(i + 1, n, sched)?);
        w.push(hi - lo);
        lo = hi;
    }
    let total: f64 = w.iter().sum();
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numerical(format!("index weight underflow for N = {n}")));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Draw `i` in `1..n` with probability `p(i)`.
pub fn sample_index(n: usize, sched: &NoiseSchedule, rng: &mut impl Rng) -> Result<usize> {
    let w = index_weights(n, sched)?;
    Ok(draw(&w, rng))
}

pub(crate) fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in weights.iter().enumerate() {
        acc += p;
        if u < acc {
            return j + 1;
        }
    }
    weights.len()
}

/// `sqrt(|x - y|^2 + c^2) - c`.
pub fn pseudo_huber(x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    pseudo_huber_grad(x, y, c).map(|(d, _)| d)
}

/// Distance and its gradient with respect to `x`.
pub fn pseudo_huber_grad(x: &[f64], y: &[f64], c: f64) -> Result<(f64, Vec<f64>)> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("pseudo-Huber constant must be positive, got {c}")));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("distance between {} and {} values", x.len(), y.len())));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let root = (sq + c * c).sqrt();
    let grad = x.iter().zip(y).map(|(a, b)| (a - b) / root).collect();
    Ok((root - c, grad))
}

/// `0.00054 * sqrt(dim)`.
pub fn default_huber_c(dim: usize) -> f64 {
    0.00054 * (dim as f64).sqrt()
}

/// `(c_skip, c_out)`; exactly `(1, 0)` at `t_min`.
pub fn skip_out_coeffs(t: f64, sched: &NoiseSchedule) -> Result<(f64, f64)> {
    if !(t >= sched.t_min) {
        return Err(Error::InvalidArgument(format!("time {t} below t_min {}", sched.t_min)));
    }
    let sd2 = sched.sigma_data * sched.sigma_data;
    let dt = t - sched.t_min;
    Ok((sd2 / (dt * dt + sd2), sched.sigma_data * dt / (sd2 + t * t).sqrt()))
}
