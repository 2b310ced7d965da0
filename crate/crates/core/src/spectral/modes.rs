//! Hermitian weight layouts: one free complex weight per conjugate pair of modes.
//!
//! The representative of a pair `{n, -n}` is the lexicographically larger signed
//! frequency vector, i.e. the closed half-space along the first axis. The partner
//! coefficient is always the conjugate of the free weight, so any real field stays real
//! after a mode-wise multiply.

use num_complex::Complex64;

use super::calculus::signed_frequency;
use super::grid::strides;
use crate::error::{Error, Result};

/// Flat indices of a mode and its conjugate partner; equal for self-conjugate modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePair {
    pub idx: usize,
    pub partner: usize,
}

impl ModePair {
    pub fn is_self_conjugate(&self) -> bool {
        self.idx == self.partner
    }

    /// Coefficients at `(idx, partner)` generated by the free weight.
    pub fn expand(&self, w: Complex64) -> (Complex64, Complex64) {
        if self.is_self_conjugate() {
            let r = Complex64::new(w.re, 0.0);
            (r, r)
        } else {
            (w, w.conj())
        }
    }

    /// Gradient of a real loss w.r.t. the free weight, packed as `(dL/dRe, dL/dIm)`,
    /// given sensitivities `g` with `dL = Re sum_k g(k) dK(k)`.
    pub fn fold_grad(&self, g_idx: Complex64, g_partner: Complex64) -> Complex64 {
        if self.is_self_conjugate() {
            Complex64::new(g_idx.re, 0.0)
        } else {
            Complex64::new(g_idx.re + g_partner.re, -g_idx.im + g_partner.im)
        }
    }
}

fn negated_signed(n: &[i64], shape: &[usize]) -> Vec<i64> {
    n.iter()
        .zip(shape)
        .map(|(&f, &m)| {
            let m = m as i64;
            signed_frequency((-f).rem_euclid(m) as usize, m as usize)
        })
        .collect()
}

fn fft_flat(n: &[i64], shape: &[usize], st: &[usize]) -> usize {
    n.iter()
        .zip(shape)
        .zip(st)
        .map(|((&f, &m), &s)| (f.rem_euclid(m as i64) as usize) * s)
        .sum()
}

/// Truncated low-mode box `|n_j| <= modes_j - 1`, independent of grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBox {
    modes: Vec<usize>,
    reps: Vec<Vec<i64>>,
}

impl ModeBox {
    pub fn new(modes: &[usize]) -> Result<Self> {
        if modes.is_empty() || modes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidArgument(format!("invalid mode counts {modes:?}")));
        }
        let ranges: Vec<i64> = modes.iter().map(|&m| m as i64 - 1).collect();
        let total: usize = modes.iter().map(|&m| 2 * m - 1).product();
        let mut reps = Vec::new();
        let mut n = vec![0i64; modes.len()];
        for flat in 0..total {
            let mut rest = flat;
            for j in (0..modes.len()).rev() {
                let w = 2 * modes[j] - 1;
                n[j] = (rest % w) as i64 - ranges[j];
                rest /= w;
            }
            let neg: Vec<i64> = n.iter().map(|v| -v).collect();
            if n >= neg {
                reps.push(n.clone());
            }
        }
        Ok(ModeBox {
            modes: modes.to_vec(),
            reps,
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Number of free complex weights.
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn reps(&self) -> &[Vec<i64>] {
        &self.reps
    }

    /// Placement of each representative on a grid; `None` where the mode (or its
    /// partner) does not exist strictly below the Nyquist frequency.
    pub fn pairs_on(&self, shape: &[usize]) -> Result<Vec<Option<ModePair>>> {
        if shape.len() != self.modes.len() {
            return Err(Error::Shape(format!(
                "{}-d mode box on {}-d grid",
                self.modes.len(),
                shape.len()
            )));
        }
        let st = strides(shape);
        Ok(self
            .reps
            .iter()
            .map(|n| {
                let fits = n.iter().zip(shape).all(|(&f, &m)| 2 * f.unsigned_abs() < m as u64);
                fits.then(|| {
                    let neg: Vec<i64> = n.iter().map(|v| -v).collect();
                    ModePair {
                        idx: fft_flat(n, shape, &st),
                        partner: fft_flat(&neg, shape, &st),
                    }
                })
            })
            .collect())
    }
}

/// Full mode lattice of a grid (Nyquist included), split into conjugate pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePairing {
    shape: Vec<usize>,
    reps: Vec<Vec<i64>>,
    fft_pairs: Vec<ModePair>,
    centered_pairs: Vec<ModePair>,
}

impl LatticePairing {
    pub fn new(shape: &[usize]) -> Self {
        let st = strides(shape);
        let total: usize = shape.iter().product();
        let centers: Vec<i64> = shape.iter().map(|&m| (m / 2) as i64).collect();
        let centered_flat = |n: &[i64]| -> usize {
            n.iter()
                .zip(&centers)
                .zip(&st)
                .map(|((&f, &c), &s)| (f + c) as usize * s)
                .sum()
        };
        let mut reps = Vec::new();
        let mut fft_pairs = Vec::new();
        let mut centered_pairs = Vec::new();
        let mut n = vec![0i64; shape.len()];
        for flat in 0..total {
            // Walk the centred lattice in row-major order.
            let mut rest = flat;
            for j in (0..shape.len()).rev() {
                n[j] = (rest % shape[j]) as i64 - centers[j];
                rest /= shape[j];
            }
            let partner = negated_signed(&n, shape);
            if n >= partner {
                fft_pairs.push(ModePair {
                    idx: fft_flat(&n, shape, &st),
                    partner: fft_flat(&partner, shape, &st),
                });
                centered_pairs.push(ModePair {
                    idx: centered_flat(&n),
                    partner: centered_flat(&partner),
                });
                reps.push(n.clone());
            }
        }
        LatticePairing {
            shape: shape.to_vec(),
            reps,
            fft_pairs,
            centered_pairs,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn reps(&self) -> &[Vec<i64>] {
        &self.reps
    }

    pub fn fft_pairs(&self) -> &[ModePair] {
        &self.fft_pairs
    }

    pub fn centered_pairs(&self) -> &[ModePair] {
        &self.centered_pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_box_counts_half_the_modes() {
        let b = ModeBox::new(&[3]).unwrap();
        assert_eq!(b.reps(), &[vec![0], vec![1], vec![2]]);
        let b = ModeBox::new(&[3, 3]).unwrap();
        // 25 modes: zero plus 12 conjugate pairs
        assert_eq!(b.len(), 13);
        assert_eq!(b.reps()[0], vec![0, 0]);
        assert!(b.reps().iter().all(|n| n[0] > 0 || (n[0] == 0 && n[1] >= 0)));
    }

    #[test]
    fn mode_box_skips_modes_beyond_grid() {
        let b = ModeBox::new(&[4]).unwrap();
        let pairs = b.pairs_on(&[6]).unwrap();
        assert_eq!(pairs[0], Some(ModePair { idx: 0, partner: 0 }));
        assert_eq!(pairs[2], Some(ModePair { idx: 2, partner: 4 }));
        assert_eq!(pairs[3], None); // Nyquist of a 6-point axis
    }

    #[test]
    fn lattice_pairs_cover_every_mode_once() {
        for shape in [vec![4, 4], vec![5, 4], vec![3, 6], vec![6]] {
            let p = LatticePairing::new(&shape);
            let total: usize = shape.iter().product();
            let mut seen = vec![0; total];
            for pair in p.fft_pairs() {
                seen[pair.idx] += 1;
                if !pair.is_self_conjugate() {
                    seen[pair.partner] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1), "{shape:?}: {seen:?}");
        }
    }

    #[test]
    fn fold_grad_matches_directional_derivative() {
        let pair = ModePair { idx: 1, partner: 3 };
        let g1 = Complex64::new(0.3, -0.7);
        let g3 = Complex64::new(0.3, 0.7);
        let grad = pair.fold_grad(g1, g3);
        for dw in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let (d1, d3) = pair.expand(dw);
            let dl = (g1 * d1 + g3 * d3).re;
            assert!((dl - (grad.re * dw.re + grad.im * dw.im)).abs() < 1e-15);
        }
    }
}
