//! Momentum-conserving projection: rotation-invariant spectral kernel plus the fixed
//! p4-symmetric residual stencil.
//!
//! `D_mom(v) = W_inv v + W_inv crop(F^-1 unshift(K . shift(F pad(v))))`

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spectral::modes::LatticePairing;
use crate::spectral::{center_shift_raw, forward_raw, inverse_raw, strides, unravel, RealField, ShiftDirection};

/// 3x3 stencil with one value each for centre, edges and corners, so it equals its own
/// 90 degree rotation. Applied per channel with periodic wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantConvP4 {
    pub center: f64,
    pub edge: f64,
    pub corner: f64,
}

impl Default for InvariantConvP4 {
    fn default() -> Self {
        InvariantConvP4::identity()
    }
}

impl InvariantConvP4 {
    pub fn identity() -> Self {
        InvariantConvP4 {
            center: 1.0,
            edge: 0.0,
            corner: 0.0,
        }
    }

    pub fn new(center: f64, edge: f64, corner: f64) -> Self {
        InvariantConvP4 { center, edge, corner }
    }

    pub fn stencil(&self) -> [[f64; 3]; 3] {
        let (c, e, r) = (self.center, self.edge, self.corner);
        [[r, e, r], [e, c, e], [r, e, r]]
    }

    pub fn is_identity(&self) -> bool {
        *self == InvariantConvP4::identity()
    }

    pub(crate) fn apply_raw(&self, data: &[f64], channels: usize, shape: &[usize]) -> Vec<f64> {
        if self.is_identity() {
            return data.to_vec();
        }
        let (nx, ny) = (shape[0], shape[1]);
        let n = nx * ny;
        let s = self.stencil();
        let mut out = vec![0.0; data.len()];
        for c in 0..channels {
            let src = &data[c * n..(c + 1) * n];
            let dst = &mut out[c * n..(c + 1) * n];
            for i in 0..nx {
                for j in 0..ny {
                    let mut acc = 0.0;
                    for (di, row) in s.iter().enumerate() {
                        let ii = (i + nx + di - 1) % nx;
                        for (dj, w) in row.iter().enumerate() {
                            if *w != 0.0 {
                                let jj = (j + ny + dj - 1) % ny;
                                acc += w * src[ii * ny + jj];
                            }
                        }
                    }
                    dst[i * ny + j] = acc;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &RealField) -> Result<RealField> {
        let shape = v.grid().shape();
        if shape.len() != 2 {
            return Err(Error::Shape(format!(
                "p4 stencil needs a 2-d grid, got {}-d",
                shape.len()
            )));
        }
        Ok(RealField::from_parts(
            v.grid().clone(),
            v.channels(),
            self.apply_raw(v.data(), v.channels(), &shape),
        ))
    }
}

/// Spectral kernel on a centred mode lattice. Only the closed half-plane along the
/// first axis is stored; the other half is its 180 degree rotation about the lattice
/// centre, conjugated, which also makes the kernel Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationInvariantKernel {
    lattice: LatticePairing,
    channels: usize,
    free_half: Vec<Complex64>,
}

impl RotationInvariantKernel {
    pub fn unit(shape: &[usize], channels: usize) -> Self {
        let lattice = LatticePairing::new(shape);
        let free_half = vec![Complex64::new(1.0, 0.0); channels * lattice.len()];
        RotationInvariantKernel {
            lattice,
            channels,
            free_half,
        }
    }

    /// Uniform complex weights in `[-scale, scale]^2`.
    pub fn random(shape: &[usize], channels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut k = RotationInvariantKernel::unit(shape, channels);
        for w in &mut k.free_half {
            *w = Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        }
        k
    }

    pub fn from_free_half(shape: &[usize], channels: usize, free_half: Vec<Complex64>) -> Result<Self> {
        let lattice = LatticePairing::new(shape);
        if free_half.len() != channels * lattice.len() {
            return Err(Error::Shape(format!(
                "{} kernel weights for {} channels x {} free modes",
                free_half.len(),
                channels,
                lattice.len()
            )));
        }
        Ok(RotationInvariantKernel {
            lattice,
            channels,
            free_half,
        })
    }

    pub fn lattice_shape(&self) -> &[usize] {
        self.lattice.shape()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Free weights per channel.
    pub fn free_len(&self) -> usize {
        self.lattice.len()
    }

    pub fn free_half(&self) -> &[Complex64] {
        &self.free_half
    }

    pub fn free_half_mut(&mut self) -> &mut [Complex64] {
        &mut self.free_half
    }

    /// Full kernel of one channel in centred layout (zero mode at `floor(n/2)` per axis).
    pub fn full_centered(&self, channel: usize) -> Vec<Complex64> {
        let n: usize = self.lattice.shape().iter().product();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let m = self.lattice.len();
        for (r, pair) in self.lattice.centered_pairs().iter().enumerate() {
            let (a, b) = pair.expand(self.free_half[channel * m + r]);
            out[pair.idx] = a;
            out[pair.partner] = b;
        }
        out
    }

    pub(crate) fn apply_centered_raw(&self, centered: &mut [Complex64], conj: bool) {
        let n: usize = self.lattice.shape().iter().product();
        let m = self.lattice.len();
        for c in 0..self.channels {
            let block = &mut centered[c * n..(c + 1) * n];
            for (r, pair) in self.lattice.centered_pairs().iter().enumerate() {
                let (a, b) = pair.expand(self.free_half[c * m + r]);
                let (a, b) = if conj { (a.conj(), b.conj()) } else { (a, b) };
                block[pair.idx] *= a;
                if !pair.is_self_conjugate() {
                    block[pair.partner] *= b;
                }
            }
        }
    }

    pub(crate) fn grad_centered_raw(&self, x: &[Complex64], ybar: &[Complex64]) -> Vec<Complex64> {
        let n: usize = self.lattice.shape().iter().product();
        let m = self.lattice.len();
        let inv_n = 1.0 / n as f64;
        let mut g = vec![Complex64::new(0.0, 0.0); self.free_half.len()];
        for c in 0..self.channels {
            let xs = &x[c * n..(c + 1) * n];
            let ys = &ybar[c * n..(c + 1) * n];
            for (r, pair) in self.lattice.centered_pairs().iter().enumerate() {
                let gi = xs[pair.idx] * ys[pair.idx].conj() * inv_n;
                let gp = xs[pair.partner] * ys[pair.partner].conj() * inv_n;
                g[c * m + r] = pair.fold_grad(gi, gp);
            }
        }
        g
    }
}

/// Momentum projection parameters: kernel, residual stencil and per-axis zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumProjection {
    pub kernel: RotationInvariantKernel,
    pub w_inv: InvariantConvP4,
    pub padding: Vec<usize>,
}

impl MomentumProjection {
    /// `ceil(n / 4)` cells per axis.
    pub fn default_padding(shape: &[usize]) -> Vec<usize> {
        shape.iter().map(|&n| n.div_ceil(4)).collect()
    }

    pub fn unit(shape: &[usize], channels: usize, padding: Vec<usize>) -> Self {
        let lattice: Vec<usize> = shape.iter().zip(&padding).map(|(n, p)| n + p).collect();
        MomentumProjection {
            kernel: RotationInvariantKernel::unit(&lattice, channels),
            w_inv: InvariantConvP4::identity(),
            padding,
        }
    }

    fn padded_shape(&self, shape: &[usize]) -> Result<Vec<usize>> {
        if shape.len() != 2 || self.padding.len() != 2 {
            return Err(Error::Shape("momentum projection works on 2-d grids".into()));
        }
        let padded: Vec<usize> = shape.iter().zip(&self.padding).map(|(n, p)| n + p).collect();
        if padded != self.kernel.lattice_shape() {
            return Err(Error::Shape(format!(
                "kernel lattice {:?} does not match padded grid {:?}",
                self.kernel.lattice_shape(),
                padded
            )));
        }
        Ok(padded)
    }

    fn check(&self, v: &RealField) -> Result<Vec<usize>> {
        if v.channels() != self.kernel.channels() {
            return Err(Error::Shape(format!(
                "kernel has {} channels, field has {}",
                self.kernel.channels(),
                v.channels()
            )));
        }
        self.padded_shape(&v.grid().shape())
    }
}

pub(crate) fn pad_raw(data: &[f64], channels: usize, shape: &[usize], padded: &[usize]) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let m: usize = padded.iter().product();
    let pst = strides(padded);
    let mut idx = vec![0usize; shape.len()];
    let mut out = vec![0.0; channels * m];
    for p in 0..n {
        unravel(p, shape, &mut idx);
        let q: usize = idx.iter().zip(&pst).map(|(i, s)| i * s).sum();
        for c in 0..channels {
            out[c * m + q] = data[c * n + p];
        }
    }
    out
}

pub(crate) fn crop_raw(data: &[f64], channels: usize, shape: &[usize], padded: &[usize]) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let m: usize = padded.iter().product();
    let pst = strides(padded);
    let mut idx = vec![0usize; shape.len()];
    let mut out = vec![0.0; channels * n];
    for p in 0..n {
        unravel(p, shape, &mut idx);
        let q: usize = idx.iter().zip(&pst).map(|(i, s)| i * s).sum();
        for c in 0..channels {
            out[c * n + p] = data[c * m + q];
        }
    }
    out
}

/// Centred spectrum of the zero-padded field.
fn padded_centered_spectrum(data: &[f64], channels: usize, shape: &[usize], padded: &[usize]) -> Vec<Complex64> {
    let x = forward_raw(&pad_raw(data, channels, shape, padded), padded);
    center_shift_raw(&x, padded, ShiftDirection::Forward)
}

fn kernel_pass(proj: &MomentumProjection, data: &[f64], channels: usize, shape: &[usize], padded: &[usize], conj: bool) -> Vec<f64> {
    let mut xc = padded_centered_spectrum(data, channels, shape, padded);
    proj.kernel.apply_centered_raw(&mut xc, conj);
    let x = center_shift_raw(&xc, padded, ShiftDirection::Inverse);
    crop_raw(&inverse_raw(&x, padded), channels, shape, padded)
}

pub fn project_momentum(v: &RealField, proj: &MomentumProjection) -> Result<RealField> {
    let padded = proj.check(v)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("momentum projection input".into()));
    }
    let shape = v.grid().shape();
    let spectral = kernel_pass(proj, v.data(), v.channels(), &shape, &padded, false);
    let sum: Vec<f64> = v.data().iter().zip(&spectral).map(|(a, b)| a + b).collect();
    let out = proj.w_inv.apply_raw(&sum, v.channels(), &shape);
    Ok(RealField::from_parts(v.grid().clone(), v.channels(), out))
}

/// Input adjoint and kernel gradient of [`project_momentum`].
pub(crate) fn momentum_backward(
    input: &RealField,
    ybar: &RealField,
    proj: &MomentumProjection,
) -> Result<(RealField, Vec<Complex64>)> {
    let padded = proj.check(input)?;
    let shape = input.grid().shape();
    let ch = input.channels();
    // The stencil is symmetric under 180 degree rotation, so it is its own adjoint.
    let zbar = proj.w_inv.apply_raw(ybar.data(), ch, &shape);
    let xc = padded_centered_spectrum(input.data(), ch, &shape, &padded);
    let zc = padded_centered_spectrum(&zbar, ch, &shape, &padded);
    let grad = proj.kernel.grad_centered_raw(&xc, &zc);
    let back = kernel_pass(proj, &zbar, ch, &shape, &padded, true);
    let xbar: Vec<f64> = zbar.iter().zip(&back).map(|(a, b)| a + b).collect();
    Ok((RealField::from_parts(input.grid().clone(), ch, xbar), grad))
}
