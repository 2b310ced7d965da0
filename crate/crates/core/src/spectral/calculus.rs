//! Wavenumber algebra and spectral derivatives.
//!
//! Differentiation zeroes the Nyquist mode of even-length axes: `i k` is sign-ambiguous
//! there and a nonzero value would break Hermitian symmetry.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::SpectralField;
use super::grid::{unravel, GridSpec};
use crate::error::{Error, Result};

/// Integer frequency of FFT-order index `i` on an axis of length `n`
/// (`0, 1, ..., -n/2, ..., -1` for even `n`).
pub fn signed_frequency(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn is_nyquist(i: usize, n: usize) -> bool {
    n % 2 == 0 && i == n / 2
}

/// Angular wavenumbers `k = 2 pi n / L` per axis in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavenumbers {
    k: Vec<Vec<f64>>,
    freq: Vec<Vec<i64>>,
}

impl Wavenumbers {
    pub fn new(grid: &GridSpec) -> Self {
        let mut k = Vec::new();
        let mut freq = Vec::new();
        for a in grid.axes() {
            let f: Vec<i64> = (0..a.size).map(|i| signed_frequency(i, a.size)).collect();
            k.push(f.iter().map(|&n| 2.0 * PI * n as f64 / a.extent).collect());
            freq.push(f);
        }
        Wavenumbers { k, freq }
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    pub fn frequencies(&self, axis: usize) -> &[i64] {
        &self.freq[axis]
    }

    /// Wavenumber used by first-derivative operators: zero on even-axis Nyquist.
    pub fn derivative(&self, axis: usize, i: usize) -> f64 {
        let n = self.k[axis].len();
        if is_nyquist(i, n) {
            0.0
        } else {
            self.k[axis][i]
        }
    }

    /// Per-axis derivative wavenumber tables.
    pub fn derivative_tables(&self) -> Vec<Vec<f64>> {
        (0..self.k.len())
            .map(|a| (0..self.k[a].len()).map(|i| self.derivative(a, i)).collect())
            .collect()
    }

    /// `|k|^2` at every flat index (full wavenumbers, Nyquist included).
    pub fn magnitude_sq(&self) -> Vec<f64> {
        let shape: Vec<usize> = self.k.iter().map(|v| v.len()).collect();
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        (0..n)
            .map(|p| {
                unravel(p, &shape, &mut idx);
                idx.iter().enumerate().map(|(a, &i)| self.k[a][i].powi(2)).sum()
            })
            .collect()
    }
}

/// Flat-index table of the derivative wavenumber along `axis`.
pub(crate) fn derivative_wavenumber_field(grid: &GridSpec, axis: usize) -> Vec<f64> {
    let wn = Wavenumbers::new(grid);
    let shape = grid.shape();
    let mut idx = vec![0usize; shape.len()];
    (0..grid.len())
        .map(|p| {
            unravel(p, &shape, &mut idx);
            wn.derivative(axis, idx[axis])
        })
        .collect()
}

fn require_fft_order(s: &SpectralField) -> Result<()> {
    if s.is_centered() {
        Err(Error::InvalidArgument(
            "spectral calculus expects FFT-ordered coefficients".into(),
        ))
    } else {
        Ok(())
    }
}

/// Multiply every channel by `i k_axis`.
pub fn spectral_gradient(s: &SpectralField, axis: usize) -> Result<SpectralField> {
    require_fft_order(s)?;
    if axis >= s.grid().ndim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for {}-d grid",
            s.grid().ndim()
        )));
    }
    let kx = derivative_wavenumber_field(s.grid(), axis);
    let n = s.grid().len();
    let coeffs = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * Complex64::new(0.0, kx[i % n]))
        .collect();
    Ok(SpectralField::from_parts(s.grid().clone(), s.channels(), coeffs))
}

/// `sum_j i k_{axes[j]} v_j`; channel `j` is differentiated along `axes[j]`.
pub fn spectral_divergence(v: &SpectralField, axes: &[usize]) -> Result<SpectralField> {
    require_fft_order(v)?;
    if v.channels() != axes.len() {
        return Err(Error::Shape(format!(
            "divergence of {} channels along {} axes",
            v.channels(),
            axes.len()
        )));
    }
    let n = v.grid().len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, &axis) in axes.iter().enumerate() {
        if axis >= v.grid().ndim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        let k = derivative_wavenumber_field(v.grid(), axis);
        for (p, o) in out.iter_mut().enumerate() {
            *o += v.channel(j)[p] * Complex64::new(0.0, k[p]);
        }
    }
    Ok(SpectralField::from_parts(v.grid().clone(), 1, out))
}

/// Multiply by `-|k|^2`.
pub fn spectral_laplacian(s: &SpectralField) -> Result<SpectralField> {
    require_fft_order(s)?;
    let k2 = Wavenumbers::new(s.grid()).magnitude_sq();
    let n = s.grid().len();
    let coeffs = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * -k2[i % n])
        .collect();
    Ok(SpectralField::from_parts(s.grid().clone(), s.channels(), coeffs))
}

/// Divide by `-|k|^2`; the zero mode maps to zero (mean is a gauge freedom).
pub fn spectral_laplacian_inverse(s: &SpectralField) -> Result<SpectralField> {
    require_fft_order(s)?;
    let k2 = Wavenumbers::new(s.grid()).magnitude_sq();
    let n = s.grid().len();
    let coeffs = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let m = k2[i % n];
            if m == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c / -m
            }
        })
        .collect();
    Ok(SpectralField::from_parts(s.grid().clone(), s.channels(), coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{fft_forward, fft_inverse, RealField};

    fn max_err(a: &RealField, b: &RealField) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn frequencies_follow_fft_order() {
        let f: Vec<i64> = (0..4).map(|i| signed_frequency(i, 4)).collect();
        assert_eq!(f, vec![0, 1, -2, -1]);
        let f: Vec<i64> = (0..5).map(|i| signed_frequency(i, 5)).collect();
        assert_eq!(f, vec![0, 1, 2, -2, -1]);
        let g = GridSpec::periodic(&[6], &[3.0]).unwrap();
        let wn = Wavenumbers::new(&g);
        assert_eq!(wn.axis(0)[0], 0.0);
        for n in 1..6 {
            if !is_nyquist(n, 6) {
                assert_eq!(wn.axis(0)[n], -wn.axis(0)[6 - n]);
            }
        }
        assert_eq!(wn.derivative(0, 3), 0.0);
    }

    #[test]
    fn derivative_of_sine() {
        let g = GridSpec::unit(&[32]).unwrap();
        let f = RealField::from_fn(&g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let d = fft_inverse(&spectral_gradient(&fft_forward(&f).unwrap(), 0).unwrap()).unwrap();
        let want = RealField::from_fn(&g, 1, |_, x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(max_err(&d, &want) < 1e-10);

        let s = fft_forward(&f).unwrap();
        let dd = spectral_gradient(&spectral_gradient(&s, 0).unwrap(), 0).unwrap();
        let dd = fft_inverse(&dd).unwrap();
        let want = f.scaled(-4.0 * PI * PI);
        assert!(max_err(&dd, &want) < 1e-9);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let f = RealField::from_fn(&g, 1, |_, _| 3.0);
        for axis in 0..2 {
            let d = fft_inverse(&spectral_gradient(&fft_forward(&f).unwrap(), axis).unwrap()).unwrap();
            assert!(d.max_abs() < 1e-12);
        }
        assert!(spectral_gradient(&fft_forward(&f).unwrap(), 2).is_err());
    }

    #[test]
    fn divergence_examples() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        let v = RealField::from_fn(&g, 2, |c, x| if c == 0 { (2.0 * PI * x[1]).sin() } else { 0.0 });
        let d = fft_inverse(&spectral_divergence(&fft_forward(&v).unwrap(), &[0, 1]).unwrap()).unwrap();
        assert!(d.max_abs() < 1e-12);

        let v = RealField::from_fn(&g, 2, |c, x| if c == 0 { (2.0 * PI * x[0]).sin() } else { 0.0 });
        let d = fft_inverse(&spectral_divergence(&fft_forward(&v).unwrap(), &[0, 1]).unwrap()).unwrap();
        let want = RealField::from_fn(&g, 1, |_, x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(max_err(&d, &want) < 1e-10);

        // v = grad(phi), phi = sin(2 pi x) sin(2 pi y): div v = -8 pi^2 phi
        let tp = 2.0 * PI;
        let v = RealField::from_fn(&g, 2, |c, x| {
            if c == 0 {
                tp * (tp * x[0]).cos() * (tp * x[1]).sin()
            } else {
                tp * (tp * x[0]).sin() * (tp * x[1]).cos()
            }
        });
        let d = fft_inverse(&spectral_divergence(&fft_forward(&v).unwrap(), &[0, 1]).unwrap()).unwrap();
        let want = RealField::from_fn(&g, 1, |_, x| -8.0 * PI * PI * (tp * x[0]).sin() * (tp * x[1]).sin());
        assert!(max_err(&d, &want) < 1e-9);

        assert!(spectral_divergence(&fft_forward(&v).unwrap(), &[0]).is_err());
    }

    #[test]
    fn laplacian_inverse_examples() {
        let g = GridSpec::unit(&[16]).unwrap();
        let rhs = RealField::from_fn(&g, 1, |_, x| -4.0 * PI * PI * (2.0 * PI * x[0]).sin());
        let phi = fft_inverse(&spectral_laplacian_inverse(&fft_forward(&rhs).unwrap()).unwrap()).unwrap();
        let want = RealField::from_fn(&g, 1, |_, x| (2.0 * PI * x[0]).sin());
        assert!(max_err(&phi, &want) < 1e-12);

        let c = RealField::from_fn(&g, 1, |_, _| 4.0);
        let z = fft_inverse(&spectral_laplacian_inverse(&fft_forward(&c).unwrap()).unwrap()).unwrap();
        assert!(z.max_abs() == 0.0);
    }
}
