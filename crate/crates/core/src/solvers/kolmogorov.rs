//! 2-D Kolmogorov flow in vorticity form on the unit torus,
//! `w_t + u . grad w = nu lap w + f`, `u = (d_y psi, -d_x psi)`, `-lap psi = w`.
//!
//! Crank–Nicolson on diffusion, Adams–Bashforth 2 on the 2/3-dealiased advection
//! (forward Euler for the first step). Axis 0 is `x`, axis 1 is `y`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{derivative_wavenumber_field, forward_raw, inverse_raw, signed_frequency, unravel, GridSpec, RealField};

#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovConfig {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub forcing_amplitude: f64,
    /// Solver steps between recorded frames.
    pub record_every: usize,
    /// Recorded frames, including the initial state.
    pub frames: usize,
    /// Solver steps run before the first recorded frame.
    pub warmup: usize,
    pub init_tau: f64,
    pub init_alpha: f64,
}

impl Default for KolmogorovConfig {
    fn default() -> Self {
        KolmogorovConfig {
            n: 64,
            nu: 1e-3,
            dt: 1e-4,
            forcing_amplitude: 0.1,
            record_every: 100,
            frames: 30,
            warmup: 0,
            init_tau: 7.0,
            init_alpha: 2.5,
        }
    }
}

impl KolmogorovConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::unit(&[self.n, self.n])
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 || self.frames == 0 || self.record_every == 0 {
            return Err(Error::InvalidArgument("Kolmogorov needs n >= 4, frames >= 1, record_every >= 1".into()));
        }
        if !(self.dt > 0.0 && self.nu >= 0.0) {
            return Err(Error::InvalidArgument("Kolmogorov needs dt > 0 and nu >= 0".into()));
        }
        Ok(())
    }
}

/// Recorded frames of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovTrajectory {
    pub vorticity: Vec<RealField>,
    pub velocity: Vec<RealField>,
}

struct Spectral {
    shape: Vec<usize>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    keep: Vec<bool>,
}

impl Spectral {
    fn new(grid: &GridSpec) -> Spectral {
        let shape = grid.shape();
        let kx = derivative_wavenumber_field(grid, 0);
        let ky = derivative_wavenumber_field(grid, 1);
        let k2 = kx.iter().zip(&ky).map(|(a, b)| a * a + b * b).collect();
        let mut idx = [0usize; 2];
        let keep = (0..grid.len())
            .map(|p| {
                unravel(p, &shape, &mut idx);
                (0..2).all(|a| 3 * signed_frequency(idx[a], shape[a]).unsigned_abs() as usize <= shape[a])
            })
            .collect();
        Spectral { shape, kx, ky, k2, keep }
    }

    /// `(u_x_hat, u_y_hat)` from the vorticity spectrum.
    fn velocity_hat(&self, w_hat: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = w_hat.len();
        let mut ux = vec![Complex64::new(0.0, 0.0); n];
        let mut uy = vec![Complex64::new(0.0, 0.0); n];
        for p in 0..n {
            if self.k2[p] == 0.0 {
                continue;
            }
            let psi = w_hat[p] / self.k2[p];
            ux[p] = psi * Complex64::new(0.0, self.ky[p]);
            uy[p] = -psi * Complex64::new(0.0, self.kx[p]);
        }
        (ux, uy)
    }

    /// Dealiased spectrum of `-(u . grad w)` and the max speed.
    fn advection(&self, w_hat: &[Complex64]) -> (Vec<Complex64>, f64) {
        let (uxh, uyh) = self.velocity_hat(w_hat);
        let dwx: Vec<Complex64> = w_hat.iter().zip(&self.kx).map(|(w, k)| w * Complex64::new(0.0, *k)).collect();
        let dwy: Vec<Complex64> = w_hat.iter().zip(&self.ky).map(|(w, k)| w * Complex64::new(0.0, *k)).collect();
        let ux = inverse_raw(&uxh, &self.shape);
        let uy = inverse_raw(&uyh, &self.shape);
        let wx = inverse_raw(&dwx, &self.shape);
        let wy = inverse_raw(&dwy, &self.shape);
        let mut speed = 0.0f64;
        let adv: Vec<f64> = (0..ux.len())
            .map(|p| {
                speed = speed.max(ux[p].abs().max(uy[p].abs()));
                -(ux[p] * wx[p] + uy[p] * wy[p])
            })
            .collect();
        let mut out = forward_raw(&adv, &self.shape);
        for (c, &k) in out.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        (out, speed)
    }
}

/// Velocity `(d_y psi, -d_x psi)` with `psi_hat = w_hat / |k|^2`; the zero mode (and the
/// even-grid Nyquist modes, where the derivative is zeroed) carry no velocity.
pub fn vorticity_to_velocity(w: &RealField) -> Result<RealField> {
    if w.channels() != 1 || w.grid().ndim() != 2 {
        return Err(Error::Shape("vorticity must be a 1-channel 2-d field".into()));
    }
    let s = Spectral::new(w.grid());
    let (ux, uy) = s.velocity_hat(&forward_raw(w.data(), &s.shape));
    let mut data = inverse_raw(&ux, &s.shape);
    data.extend(inverse_raw(&uy, &s.shape));
    RealField::new(w.grid().clone(), 2, data)
}

/// Spectral curl `d_x u_y - d_y u_x` of a 2-channel field.
pub fn spectral_curl(u: &RealField) -> Result<RealField> {
    if u.channels() != 2 || u.grid().ndim() != 2 {
        return Err(Error::Shape("curl needs a 2-channel 2-d field".into()));
    }
    let s = Spectral::new(u.grid());
    let c = forward_raw(u.data(), &s.shape);
    let n = u.points();
    let curl: Vec<Complex64> = (0..n)
        .map(|p| c[n + p] * Complex64::new(0.0, s.kx[p]) - c[p] * Complex64::new(0.0, s.ky[p]))
        .collect();
    RealField::new(u.grid().clone(), 1, inverse_raw(&curl, &s.shape))
}

/// `amplitude * (sin(2 pi (x + y)) + cos(2 pi (x + y)))`.
pub fn kolmogorov_forcing(grid: &GridSpec, amplitude: f64) -> RealField {
    RealField::from_fn(grid, 1, |_, x| {
        let a = 2.0 * PI * (x[0] + x[1]);
        amplitude * (a.sin() + a.cos())
    })
}

/// Periodic Gaussian random field with spectral amplitude
/// `tau^(alpha - 1) (4 pi^2 |n|^2 + tau^2)^(-alpha/2)` and zero mean.
pub fn gaussian_random_vorticity(grid: &GridSpec, tau: f64, alpha: f64, rng: &mut impl Rng) -> Result<RealField> {
    let shape = grid.shape();
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut c = forward_raw(&noise, &shape);
    let scale = (grid.len() as f64).sqrt() * std::f64::consts::SQRT_2 * tau.powf(alpha - 1.0);
    let mut idx = vec![0usize; shape.len()];
    for (p, v) in c.iter_mut().enumerate() {
        unravel(p, &shape, &mut idx);
        let n2: f64 = idx
            .iter()
            .zip(&shape)
            .map(|(&i, &m)| (signed_frequency(i, m) as f64).powi(2))
            .sum();
        *v *= if n2 == 0.0 {
            0.0
        } else {
            scale * (4.0 * PI * PI * n2 + tau * tau).powf(-alpha / 2.0)
        };
    }
    RealField::new(grid.clone(), 1, inverse_raw(&c, &shape))
}

pub fn solve_kolmogorov(cfg: &KolmogorovConfig, w0: &RealField) -> Result<KolmogorovTrajectory> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    if w0.channels() != 1 || w0.grid().shape() != grid.shape() {
        return Err(Error::Shape(format!(
            "initial vorticity must be 1 x {:?}",
            grid.shape()
        )));
    }
    let s = Spectral::new(&grid);
    let dx = 1.0 / cfg.n as f64;
    let f_hat = forward_raw(kolmogorov_forcing(&grid, cfg.forcing_amplitude).data(), &s.shape);
    let half = 0.5 * cfg.nu * cfg.dt;
    let lhs: Vec<f64> = s.k2.iter().map(|k| 1.0 / (1.0 + half * k)).collect();
    let rhs: Vec<f64> = s.k2.iter().map(|k| 1.0 - half * k).collect();

    let mut w_hat = forward_raw(w0.data(), &s.shape);
    let mut prev: Option<Vec<Complex64>> = None;
    let mut out = KolmogorovTrajectory {
        vorticity: Vec::with_capacity(cfg.frames),
        velocity: Vec::with_capacity(cfg.frames),
    };
    let total = cfg.warmup + (cfg.frames - 1) * cfg.record_every;
    for step in 0..=total {
        if step >= cfg.warmup && (step - cfg.warmup) % cfg.record_every == 0 {
            let w = RealField::new(grid.clone(), 1, inverse_raw(&w_hat, &s.shape))?;
            out.velocity.push(vorticity_to_velocity(&w)?);
            out.vorticity.push(w);
        }
        if step == total {
            break;
        }
        let (adv, speed) = s.advection(&w_hat);
        let cfl = speed * cfg.dt / dx;
        if !cfl.is_finite() || cfl >= 1.0 {
            return Err(Error::Numerical(format!("CFL number {cfl:.3} at step {step}")));
        }
        for p in 0..w_hat.len() {
            let explicit = match &prev {
                Some(old) => 1.5 * adv[p] - 0.5 * old[p],
                None => adv[p],
            };
            w_hat[p] = (w_hat[p] * rhs[p] + (explicit + f_hat[p]) * cfg.dt) * lhs[p];
        }
        prev = Some(adv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::divergence_loss;
    use crate::rng;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn velocity_of_a_shear_mode() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        let w = RealField::from_fn(&g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let u = vorticity_to_velocity(&w).unwrap();
        // psi = sin(2 pi x) / (4 pi^2)
        let want = RealField::from_fn(&g, 2, |c, x| if c == 0 { 0.0 } else { -(2.0 * PI * x[0]).cos() / (2.0 * PI) });
        assert!(max_diff(u.data(), want.data()) < 1e-12);
        let z = vorticity_to_velocity(&RealField::zeros(&g, 1)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curl_recovers_mean_free_vorticity() {
        // odd grid: every nonzero mode has a nonzero derivative wavenumber
        let g = GridSpec::unit(&[33, 33]).unwrap();
        let mut r = rng::stream(5, "test/kolmogorov");
        let w = RealField::new(g.clone(), 1, (0..g.len()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let u = vorticity_to_velocity(&w).unwrap();
        let curl = spectral_curl(&u).unwrap();
        let mean = w.channel_means()[0];
        let expect: Vec<f64> = w.data().iter().map(|v| v - mean).collect();
        assert!(max_diff(curl.data(), &expect) < 1e-10);
        assert!(divergence_loss(&u).unwrap() < 1e-12);
    }

    #[test]
    fn single_mode_decays_exponentially() {
        let cfg = KolmogorovConfig {
            n: 32,
            forcing_amplitude: 0.0,
            record_every: 10,
            frames: 11,
            ..KolmogorovConfig::default()
        };
        let g = cfg.grid().unwrap();
        let w0 = RealField::from_fn(&g, 1, |_, x| (2.0 * PI * (x[0] + x[1])).sin());
        let traj = solve_kolmogorov(&cfg, &w0).unwrap();
        for (f, w) in traj.vorticity.iter().enumerate() {
            let t = (f * cfg.record_every) as f64 * cfg.dt;
            let decay = (-8.0 * PI * PI * cfg.nu * t).exp();
            let want: Vec<f64> = w0.data().iter().map(|v| v * decay).collect();
            assert!(max_diff(w.data(), &want) < 1e-6 * decay);
            assert!(divergence_loss(&traj.velocity[f]).unwrap() < 1e-10);
        }
    }

    #[test]
    fn forcing_stays_in_its_mode() {
        let cfg = KolmogorovConfig {
            n: 16,
            record_every: 50,
            frames: 3,
            dt: 1e-2,
            ..KolmogorovConfig::default()
        };
        let g = cfg.grid().unwrap();
        let traj = solve_kolmogorov(&cfg, &RealField::zeros(&g, 1)).unwrap();
        let f = kolmogorov_forcing(&g, 1.0);
        let last = traj.vorticity.last().unwrap();
        let ratio = last.data()[1] / f.data()[1];
        assert!(ratio > 0.0);
        let want: Vec<f64> = f.data().iter().map(|v| v * ratio).collect();
        assert!(max_diff(last.data(), &want) < 1e-12);
    }

    #[test]
    fn energy_is_non_increasing_without_forcing() {
        let cfg = KolmogorovConfig {
            n: 32,
            nu: 1e-2,
            dt: 1e-3,
            forcing_amplitude: 0.0,
            record_every: 20,
            frames: 10,
            ..KolmogorovConfig::default()
        };
        let g = cfg.grid().unwrap();
        let mut r = rng::stream(6, "test/kolmogorov");
        let w0 = gaussian_random_vorticity(&g, 7.0, 2.5, &mut r).unwrap();
        let traj = solve_kolmogorov(&cfg, &w0).unwrap();
        let e: Vec<f64> = traj.velocity.iter().map(|u| u.norm_sq()).collect();
        for s in 1..e.len() {
            assert!(e[s] <= e[s - 1] * (1.0 + 1e-12), "{e:?}");
        }
    }

    #[test]
    fn cfl_violation_aborts() {
        let cfg = KolmogorovConfig {
            n: 16,
            dt: 10.0,
            frames: 2,
            record_every: 1,
            ..KolmogorovConfig::default()
        };
        let g = cfg.grid().unwrap();
        let w0 = RealField::from_fn(&g, 1, |_, x| 50.0 * (2.0 * PI * x[0]).sin());
        match solve_kolmogorov(&cfg, &w0) {
            Err(Error::Numerical(_)) => {}
            other => panic!("expected CFL abort, got {other:?}"),
        }
    }
}
