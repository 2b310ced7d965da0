//! Forward/inverse N-d transforms over channel-major fields.
//!
//! Convention used everywhere in the crate: the forward transform is unnormalized,
//! the inverse divides by the number of grid points.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::grid::{strides, unravel, GridSpec, RealField};
use crate::error::{Error, Result};

/// Relative asymmetry above which a spectrum flagged Hermitian is rejected.
const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    Forward,
    Inverse,
}

/// Complex Fourier coefficients of a real field, one block of `grid.len()` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    channels: usize,
    coeffs: Vec<Complex64>,
    hermitian: bool,
    centered: bool,
}

impl SpectralField {
    pub fn new(grid: GridSpec, channels: usize, coeffs: Vec<Complex64>, hermitian: bool) -> Result<Self> {
        if channels == 0 || coeffs.len() != channels * grid.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} channels on {} points",
                coeffs.len(),
                channels,
                grid.len()
            )));
        }
        Ok(SpectralField {
            grid,
            channels,
            coeffs,
            hermitian,
            centered: false,
        })
    }

    pub(crate) fn from_parts(grid: GridSpec, channels: usize, coeffs: Vec<Complex64>) -> Self {
        SpectralField {
            grid,
            channels,
            coeffs,
            hermitian: true,
            centered: false,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.coeffs[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.coeffs[c * n..(c + 1) * n]
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// True when the zero mode sits at the array centre (after a forward centre shift).
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn set_hermitian(&mut self, flag: bool) {
        self.hermitian = flag;
    }

    /// Largest `|c(k) - conj(c(-k))|` relative to the largest coefficient.
    pub fn symmetry_residual(&self) -> f64 {
        let shape = self.grid.shape();
        let neg = negation_table(&shape);
        let n = self.grid.len();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for c in 0..self.channels {
            let ch = &self.coeffs[c * n..(c + 1) * n];
            for (i, v) in ch.iter().enumerate() {
                scale = scale.max(v.norm());
                worst = worst.max((v - ch[neg[i]].conj()).norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Flat index of `-k` (mod grid size) for every flat index `k`.
fn negation_table(shape: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let st = strides(shape);
    let mut idx = vec![0usize; shape.len()];
    (0..n)
        .map(|p| {
            unravel(p, shape, &mut idx);
            idx.iter()
                .zip(shape)
                .zip(&st)
                .map(|((&i, &m), &s)| ((m - i) % m) * s)
                .sum()
        })
        .collect()
}

/// In-place N-d transform of every channel block in `buf`.
pub(crate) fn transform(buf: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let st = strides(shape);
    let blocks = buf.len() / n;
    for (axis, &len) in shape.iter().enumerate() {
        let fft = planner.plan_fft(len, direction);
        if st[axis] == 1 {
            fft.process(buf);
            continue;
        }
        // Gather strided lines into a contiguous scratch block, transform, scatter back.
        let stride = st[axis];
        let outer = n / (len * stride);
        let mut lines = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..blocks {
            let block = &mut buf[b * n..(b + 1) * n];
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * len * stride + inner;
                    for i in 0..len {
                        lines[line * len + i] = block[base + i * stride];
                    }
                    line += 1;
                }
            }
            fft.process(&mut lines);
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * len * stride + inner;
                    for i in 0..len {
                        block[base + i * stride] = lines[line * len + i];
                    }
                    line += 1;
                }
            }
        }
    }
}

/// Forward transform of raw channel-major real data.
pub(crate) fn forward_raw(data: &[f64], shape: &[usize]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut buf, shape, FftDirection::Forward);
    buf
}

/// Inverse transform of raw Hermitian coefficients, keeping the real part.
pub(crate) fn inverse_raw(coeffs: &[Complex64], shape: &[usize]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    transform(&mut buf, shape, FftDirection::Inverse);
    let scale = 1.0 / shape.iter().product::<usize>() as f64;
    buf.into_iter().map(|c| c.re * scale).collect()
}

pub fn fft_forward(f: &RealField) -> Result<SpectralField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("fft_forward input".into()));
    }
    let coeffs = forward_raw(f.data(), &f.grid().shape());
    Ok(SpectralField::from_parts(f.grid().clone(), f.channels(), coeffs))
}

pub fn fft_inverse(s: &SpectralField) -> Result<RealField> {
    if s.centered {
        return Err(Error::InvalidArgument(
            "spectrum is centre-shifted; undo the shift before inverting".into(),
        ));
    }
    if !s.hermitian {
        return Err(Error::InvalidArgument(
            "inverse transform to a real field needs a Hermitian spectrum".into(),
        ));
    }
    let residual = s.symmetry_residual();
    if residual > SYMMETRY_TOLERANCE {
        return Err(Error::SymmetryViolation { residual });
    }
    let data = inverse_raw(&s.coeffs, &s.grid.shape());
    Ok(RealField::from_parts(s.grid.clone(), s.channels, data))
}

/// Per-axis roll that moves the zero mode to index `floor(n/2)` (forward) or back.
pub(crate) fn center_shift_raw(data: &[Complex64], shape: &[usize], direction: ShiftDirection) -> Vec<Complex64> {
    let n: usize = shape.iter().product();
    let st = strides(shape);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let mut idx = vec![0usize; shape.len()];
    let mut dest = vec![0usize; n];
    for (p, d) in dest.iter_mut().enumerate() {
        unravel(p, shape, &mut idx);
        *d = idx
            .iter()
            .zip(shape)
            .zip(&st)
            .map(|((&i, &m), &s)| {
                let h = m / 2;
                let j = match direction {
                    ShiftDirection::Forward => (i + h) % m,
                    ShiftDirection::Inverse => (i + m - h) % m,
                };
                j * s
            })
            .sum();
    }
    for b in 0..data.len() / n {
        for p in 0..n {
            out[b * n + dest[p]] = data[b * n + p];
        }
    }
    out
}

pub fn fft_center_shift(s: &SpectralField, direction: ShiftDirection) -> SpectralField {
    let coeffs = center_shift_raw(&s.coeffs, &s.grid.shape(), direction);
    SpectralField {
        grid: s.grid.clone(),
        channels: s.channels,
        coeffs,
        hermitian: s.hermitian,
        centered: direction == ShiftDirection::Forward,
    }
}
