//! Kuramoto–Sivashinsky `u_t + u u_x + u_xx + nu u_xxxx = 0` on a periodic interval.
//!
//! Second-order exponential time differencing (ETDRK2): the stiff linear part
//! `lambda(k) = k^2 - nu k^4` is integrated exactly, the nonlinear term
//! `-d_x(u^2 / 2)` is evaluated pseudo-spectrally with 2/3 dealiasing.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spectral::{forward_raw, inverse_raw, signed_frequency, Axis, GridSpec, RealField};

pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct KseConfig {
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub nu: f64,
    pub warmup: usize,
    /// Recorded frames, the first being the state right after warm-up.
    pub steps: usize,
    /// Integrator substeps per recorded step.
    pub substeps: usize,
    /// Switch off `u u_x` (linear dispersion checks).
    pub nonlinear: bool,
}

impl Default for KseConfig {
    fn default() -> Self {
        KseConfig {
            n: 256,
            length: 64.0,
            dt: 0.2,
            nu: 1.0,
            warmup: 360,
            steps: 100,
            substeps: 4,
            nonlinear: true,
        }
    }
}

impl KseConfig {
    /// Draw `L` and `dt` within 10% of the base values; `nu ~ U[0.5, 1.5]` when
    /// `vary_nu`, otherwise 1.
    pub fn sample(base: &KseConfig, vary_nu: bool, rng: &mut impl Rng) -> KseConfig {
        KseConfig {
            length: rng.random_range(0.9 * base.length..=1.1 * base.length),
            dt: rng.random_range(0.9 * base.dt..=1.1 * base.dt),
            nu: if vary_nu { rng.random_range(0.5..=1.5) } else { 1.0 },
            ..base.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 || self.steps < 2 || self.substeps == 0 {
            return Err(Error::InvalidArgument(format!(
                "KSE needs n >= 4, steps >= 2 and substeps >= 1 (got {}, {}, {})",
                self.n, self.steps, self.substeps
            )));
        }
        if !(self.length > 0.0 && self.dt > 0.0 && self.nu >= 0.0) {
            return Err(Error::InvalidArgument("KSE needs L > 0, dt > 0, nu >= 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(vec![
            Axis::temporal("t", self.steps, self.steps as f64 * self.dt),
            Axis::spatial("x", self.n, self.length),
        ])
    }
}

/// Sum of 10 sinusoids with amplitudes in `[-1, 1]`, random phases and integer
/// wavenumbers `1..=8`.
pub fn kse_random_initial(n: usize, length: f64, rng: &mut impl Rng) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> = (0..10)
        .map(|_| {
            let a = rng.random_range(-1.0..=1.0);
            let k = rng.random_range(1..=8) as f64;
            let phi = rng.random_range(0.0..2.0 * PI);
            (a, k, phi)
        })
        .collect();
    (0..n)
        .map(|i| {
            let x = length * i as f64 / n as f64;
            terms.iter().map(|(a, k, p)| a * (2.0 * PI * k * x / length + p).sin()).sum()
        })
        .collect()
}

/// `phi1(z) = (e^z - 1)/z`, `phi2(z) = (e^z - 1 - z)/z^2`.
fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 0.1 {
        // Taylor series: phi_m(z) = sum_j z^j / (j + m)!
        let (mut p1, mut p2) = (0.0, 0.0);
        let mut zj = 1.0;
        let mut f1 = 1.0; // (j+1)!
        let mut f2 = 2.0; // (j+2)!
        for j in 0..12 {
            p1 += zj / f1;
            p2 += zj / f2;
            zj *= z;
            f1 *= (j + 2) as f64;
            f2 *= (j + 3) as f64;
        }
        (p1, p2)
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (em1 - z) / (z * z))
    }
}

struct Kse {
    n: usize,
    k: Vec<f64>,
    keep: Vec<bool>,
    e: Vec<f64>,
    h_phi1: Vec<f64>,
    h_phi2: Vec<f64>,
    nonlinear: bool,
}

impl Kse {
    fn new(cfg: &KseConfig) -> Kse {
        let n = cfg.n;
        let h = cfg.dt / cfg.substeps as f64;
        let freq: Vec<i64> = (0..n).map(|i| signed_frequency(i, n)).collect();
        let k: Vec<f64> = freq
            .iter()
            .enumerate()
            .map(|(i, &f)| if 2 * i == n { 0.0 } else { 2.0 * PI * f as f64 / cfg.length })
            .collect();
        let keep = freq.iter().map(|f| 3 * f.unsigned_abs() as usize <= n).collect();
        let mut e = Vec::with_capacity(n);
        let mut h_phi1 = Vec::with_capacity(n);
        let mut h_phi2 = Vec::with_capacity(n);
        for &f in &freq {
            let kk = 2.0 * PI * f as f64 / cfg.length;
            let lam = kk * kk - cfg.nu * kk.powi(4);
            let (p1, p2) = phi12(lam * h);
            e.push((lam * h).exp());
            h_phi1.push(h * p1);
            h_phi2.push(h * p2);
        }
        Kse {
            n,
            k,
            keep,
            e,
            h_phi1,
            h_phi2,
            nonlinear: cfg.nonlinear,
        }
    }

    fn nonlinear(&self, u_hat: &[Complex64]) -> Vec<Complex64> {
        if !self.nonlinear {
            return vec![Complex64::new(0.0, 0.0); self.n];
        }
        nonlinear_term(u_hat, &self.k, &self.keep)
    }

    fn step(&self, u_hat: &mut [Complex64]) {
        let nu0 = self.nonlinear(u_hat);
        let a: Vec<Complex64> = (0..self.n)
            .map(|i| u_hat[i] * self.e[i] + nu0[i] * self.h_phi1[i])
            .collect();
        let na = self.nonlinear(&a);
        for i in 0..self.n {
            u_hat[i] = a[i] + (na[i] - nu0[i]) * self.h_phi2[i];
        }
    }
}

fn nonlinear_term(u_hat: &[Complex64], k: &[f64], keep: &[bool]) -> Vec<Complex64> {
    let n = u_hat.len();
    let truncated: Vec<Complex64> = u_hat
        .iter()
        .zip(keep)
        .map(|(c, &m)| if m { *c } else { Complex64::new(0.0, 0.0) })
        .collect();
    let u = inverse_raw(&truncated, &[n]);
    let sq: Vec<f64> = u.iter().map(|v| 0.5 * v * v).collect();
    let s = forward_raw(&sq, &[n]);
    s.iter()
        .zip(k)
        .zip(keep)
        .map(|((c, &kk), &m)| if m { -c * Complex64::new(0.0, kk) } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// Dealiased spectrum of `-d_x(u^2/2)` (FFT order); modes with `|n| > N/3` are zero.
pub fn kse_nonlinear_term(u: &[f64], length: f64) -> Vec<Complex64> {
    let n = u.len();
    let freq: Vec<i64> = (0..n).map(|i| signed_frequency(i, n)).collect();
    let k: Vec<f64> = freq
        .iter()
        .enumerate()
        .map(|(i, &f)| if 2 * i == n { 0.0 } else { 2.0 * PI * f as f64 / length })
        .collect();
    let keep: Vec<bool> = freq.iter().map(|f| 3 * f.unsigned_abs() as usize <= n).collect();
    nonlinear_term(&forward_raw(u, &[n]), &k, &keep)
}

fn check_state(u_hat: &[Complex64], n: usize, step: usize) -> Result<Vec<f64>> {
    let u = inverse_raw(u_hat, &[n]);
    let m = u.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if m > BLOWUP_LIMIT {
        return Err(Error::Numerical(format!(
            "KSE blow-up at step {step}: max |u| = {m:.3e}"
        )));
    }
    Ok(u)
}

/// Integrate from `u0`, discard `warmup` steps and record `steps` frames on a (t, x) grid.
pub fn solve_kse(cfg: &KseConfig, u0: &[f64]) -> Result<RealField> {
    cfg.validate()?;
    if u0.len() != cfg.n {
        return Err(Error::Shape(format!("initial state has {} points, config says {}", u0.len(), cfg.n)));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KSE initial state".into()));
    }
    let solver = Kse::new(cfg);
    let mut u_hat = forward_raw(u0, &[cfg.n]);
    let mut data = Vec::with_capacity(cfg.steps * cfg.n);
    let total = cfg.warmup + cfg.steps - 1;
    for step in 0..=total {
        if step > 0 {
            for _ in 0..cfg.substeps {
                solver.step(&mut u_hat);
            }
        }
        let u = check_state(&u_hat, cfg.n, step)?;
        if step >= cfg.warmup {
            data.extend(u);
        }
    }
    RealField::new(cfg.grid()?, 1, data)
}
