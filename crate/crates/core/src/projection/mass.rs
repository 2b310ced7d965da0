use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spectral::modes::{ModeBox, ModePair};
use crate::spectral::{derivative_wavenumber_field, forward_raw, inverse_raw, GridSpec, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMode {
    /// Two velocity/flux channels differentiated along the two spatial axes.
    Spatial2d,
    /// Three flux channels differentiated along (t, x1, x2).
    Spatiotemporal3d,
}

/// Learnable per-channel multipliers `W_spe` on a low-mode box. Modes outside the box
/// are passed through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMultiplier {
    modes: ModeBox,
    channels: usize,
    weights: Vec<Complex64>,
}

impl SpectralMultiplier {
    pub fn identity(modes: &[usize], channels: usize) -> Result<Self> {
        let modes = ModeBox::new(modes)?;
        let weights = vec![Complex64::new(1.0, 0.0); channels * modes.len()];
        Ok(SpectralMultiplier {
            modes,
            channels,
            weights,
        })
    }

    /// Unit multipliers perturbed by uniform noise of half-width `scale`.
    pub fn random(modes: &[usize], channels: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut m = SpectralMultiplier::identity(modes, channels)?;
        for w in &mut m.weights {
            *w += Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        }
        Ok(m)
    }

    pub fn from_weights(modes: &[usize], channels: usize, weights: Vec<Complex64>) -> Result<Self> {
        let modes = ModeBox::new(modes)?;
        if weights.len() != channels * modes.len() {
            return Err(Error::Shape(format!(
                "{} multiplier weights for {} channels x {} modes",
                weights.len(),
                channels,
                modes.len()
            )));
        }
        Ok(SpectralMultiplier {
            modes,
            channels,
            weights,
        })
    }

    pub fn modes(&self) -> &[usize] {
        self.modes.modes()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Complex64] {
        &mut self.weights
    }

    fn placed(&self, shape: &[usize]) -> Result<Vec<Option<ModePair>>> {
        self.modes.pairs_on(shape)
    }

    /// Multiply channel blocks of `coeffs` in place (`conj = true` applies the adjoint).
    pub(crate) fn apply_raw(&self, coeffs: &mut [Complex64], shape: &[usize], conj: bool) -> Result<()> {
        let n: usize = shape.iter().product();
        if coeffs.len() != self.channels * n {
            return Err(Error::Shape(format!(
                "multiplier has {} channels, spectrum has {}",
                self.channels,
                coeffs.len() / n
            )));
        }
        let pairs = self.placed(shape)?;
        let reps = self.modes.len();
        for c in 0..self.channels {
            let block = &mut coeffs[c * n..(c + 1) * n];
            for (r, pair) in pairs.iter().enumerate() {
                let Some(pair) = pair else { continue };
                let (a, b) = pair.expand(self.weights[c * reps + r]);
                let (a, b) = if conj { (a.conj(), b.conj()) } else { (a, b) };
                block[pair.idx] *= a;
                if !pair.is_self_conjugate() {
                    block[pair.partner] *= b;
                }
            }
        }
        Ok(())
    }

    /// Weight gradient given the input spectrum `x` and the output sensitivity
    /// spectrum `ybar` (already passed back through the Helmholtz projector).
    pub(crate) fn grad_raw(&self, x: &[Complex64], ybar: &[Complex64], shape: &[usize]) -> Result<Vec<Complex64>> {
        let n: usize = shape.iter().product();
        let pairs = self.placed(shape)?;
        let reps = self.modes.len();
        let mut g = vec![Complex64::new(0.0, 0.0); self.weights.len()];
        let inv_n = 1.0 / n as f64;
        for c in 0..self.channels {
            let xs = &x[c * n..(c + 1) * n];
            let ys = &ybar[c * n..(c + 1) * n];
            for (r, pair) in pairs.iter().enumerate() {
                let Some(pair) = pair else { continue };
                let gi = xs[pair.idx] * ys[pair.idx].conj() * inv_n;
                let gp = xs[pair.partner] * ys[pair.partner].conj() * inv_n;
                g[c * reps + r] = pair.fold_grad(gi, gp);
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassProjectionConfig {
    pub mode: MassMode,
    pub spectral_conv: Option<SpectralMultiplier>,
}

impl MassProjectionConfig {
    pub fn spatial() -> Self {
        MassProjectionConfig {
            mode: MassMode::Spatial2d,
            spectral_conv: None,
        }
    }

    pub fn spatiotemporal() -> Self {
        MassProjectionConfig {
            mode: MassMode::Spatiotemporal3d,
            spectral_conv: None,
        }
    }
}

/// Axes along which each channel is differentiated.
pub fn mass_axes(grid: &GridSpec, mode: MassMode) -> Result<Vec<usize>> {
    let spatial = grid.spatial_axes();
    match mode {
        MassMode::Spatial2d => {
            if spatial.len() != 2 {
                return Err(Error::Shape(format!(
                    "spatial mass projection needs 2 spatial axes, grid has {}",
                    spatial.len()
                )));
            }
            Ok(spatial)
        }
        MassMode::Spatiotemporal3d => {
            let t = grid.temporal_axis().ok_or_else(|| {
                Error::Shape("spatiotemporal mass projection needs a temporal axis".into())
            })?;
            if spatial.len() != 2 {
                return Err(Error::Shape(format!(
                    "spatiotemporal mass projection needs 2 spatial axes, grid has {}",
                    spatial.len()
                )));
            }
            Ok(vec![t, spatial[0], spatial[1]])
        }
    }
}

/// Remove the gradient part of a spectrum in place: `v - k (k . v) / |k|^2`.
///
/// `k` is the derivative wavenumber (Nyquist zeroed), so the result is exactly
/// divergence-free under the crate's spectral divergence; modes with `k = 0` pass through.
pub(crate) fn helmholtz_raw(coeffs: &mut [Complex64], grid: &GridSpec, axes: &[usize]) {
    let n = grid.len();
    let ks: Vec<Vec<f64>> = axes
        .iter()
        .map(|&a| derivative_wavenumber_field(grid, a))
        .collect();
    let d = axes.len();
    for p in 0..n {
        let k2: f64 = ks.iter().map(|k| k[p] * k[p]).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for j in 0..d {
            dot += coeffs[j * n + p] * ks[j][p];
        }
        let s = dot / k2;
        for j in 0..d {
            coeffs[j * n + p] -= s * ks[j][p];
        }
    }
}

fn check_channels(v: &RealField, axes: &[usize]) -> Result<()> {
    if v.channels() != axes.len() {
        return Err(Error::Shape(format!(
            "mass projection over {} axes needs {} channels, field has {}",
            axes.len(),
            axes.len(),
            v.channels()
        )));
    }
    Ok(())
}

/// Project onto divergence-free fields, optionally after the spectral multiplier.
pub fn project_divergence_free(v: &RealField, cfg: &MassProjectionConfig) -> Result<RealField> {
    let axes = mass_axes(v.grid(), cfg.mode)?;
    check_channels(v, &axes)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("mass projection input".into()));
    }
    let shape = v.grid().shape();
    let mut coeffs = forward_raw(v.data(), &shape);
    if let Some(m) = &cfg.spectral_conv {
        m.apply_raw(&mut coeffs, &shape, false)?;
    }
    helmholtz_raw(&mut coeffs, v.grid(), &axes);
    let data = inverse_raw(&coeffs, &shape);
    Ok(RealField::from_parts(v.grid().clone(), v.channels(), data))
}

/// Adjoint of [`project_divergence_free`] w.r.t. its input, plus the multiplier gradient.
pub(crate) fn mass_backward(
    input: &RealField,
    ybar: &RealField,
    cfg: &MassProjectionConfig,
) -> Result<(RealField, Option<Vec<Complex64>>)> {
    let axes = mass_axes(input.grid(), cfg.mode)?;
    check_channels(input, &axes)?;
    let shape = input.grid().shape();
    let mut yb = forward_raw(ybar.data(), &shape);
    helmholtz_raw(&mut yb, input.grid(), &axes);
    let grad = match &cfg.spectral_conv {
        Some(m) => {
            let x = forward_raw(input.data(), &shape);
            let g = m.grad_raw(&x, &yb, &shape)?;
            m.apply_raw(&mut yb, &shape, true)?;
            Some(g)
        }
        None => None,
    };
    let data = inverse_raw(&yb, &shape);
    Ok((RealField::from_parts(input.grid().clone(), input.channels(), data), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::divergence_loss;
    use crate::rng;
    use std::f64::consts::PI;

    const TP: f64 = 2.0 * PI;

    fn max_err(a: &RealField, b: &RealField) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn random_field(grid: &GridSpec, channels: usize, seed: u64) -> RealField {
        let mut r = rng::stream(seed, "test/field");
        let data = (0..channels * grid.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        RealField::new(grid.clone(), channels, data).unwrap()
    }

    #[test]
    fn solenoidal_input_is_unchanged() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        // v = (d_y psi, -d_x psi), psi = sin(2 pi x) sin(2 pi y)
        let v = RealField::from_fn(&g, 2, |c, x| {
            if c == 0 {
                TP * (TP * x[0]).sin() * (TP * x[1]).cos()
            } else {
                -TP * (TP * x[0]).cos() * (TP * x[1]).sin()
            }
        });
        let p = project_divergence_free(&v, &MassProjectionConfig::spatial()).unwrap();
        assert!(max_err(&p, &v) < 1e-10);
    }

    #[test]
    fn gradient_input_is_removed() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        // v = grad(sin(2 pi x) cos(2 pi y))
        let v = RealField::from_fn(&g, 2, |c, x| {
            if c == 0 {
                TP * (TP * x[0]).cos() * (TP * x[1]).cos()
            } else {
                -TP * (TP * x[0]).sin() * (TP * x[1]).sin()
            }
        });
        let p = project_divergence_free(&v, &MassProjectionConfig::spatial()).unwrap();
        assert!(p.max_abs() < 1e-10);
    }

    #[test]
    fn random_field_becomes_divergence_free_and_keeps_its_mean() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        let v = random_field(&g, 2, 3);
        let p = project_divergence_free(&v, &MassProjectionConfig::spatial()).unwrap();
        assert!(divergence_loss(&p).unwrap() < 1e-10);
        let (a, b) = (v.channel_means(), p.channel_means());
        for c in 0..2 {
            assert!((a[c] - b[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let v = random_field(&g, 1, 1);
        assert!(project_divergence_free(&v, &MassProjectionConfig::spatial()).is_err());
        let v = random_field(&g, 2, 1);
        assert!(project_divergence_free(&v, &MassProjectionConfig::spatiotemporal()).is_err());
    }

    #[test]
    fn multiplier_keeps_output_real_and_solenoidal() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let v = random_field(&g, 2, 5);
        let mut r = rng::stream(9, "test/spe");
        let cfg = MassProjectionConfig {
            mode: MassMode::Spatial2d,
            spectral_conv: Some(SpectralMultiplier::random(&[4, 4], 2, 0.5, &mut r).unwrap()),
        };
        let p = project_divergence_free(&v, &cfg).unwrap();
        assert!(divergence_loss(&p).unwrap() < 1e-10);
        // the identity multiplier reduces to the plain projection
        let plain = project_divergence_free(&v, &MassProjectionConfig::spatial()).unwrap();
        let unit = MassProjectionConfig {
            mode: MassMode::Spatial2d,
            spectral_conv: Some(SpectralMultiplier::identity(&[4, 4], 2).unwrap()),
        };
        assert!(max_err(&project_divergence_free(&v, &unit).unwrap(), &plain) < 1e-14);
    }
}
