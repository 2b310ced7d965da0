//! Per-channel min/max scaling to `[-1, 1]`.

use crate::error::{Error, Result};
use crate::spectral::RealField;

/// Maps channel values `r` to `2 (r - min) / (max - min) - 1`. A channel whose span is
/// zero normalizes to 0 and always reconstructs to its constant value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ResidualNormalizer {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.is_empty() || min.len() != max.len() || min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("normalizer bounds must satisfy min <= max per channel".into()));
        }
        Ok(ResidualNormalizer { min, max })
    }

    pub fn fit(fields: &[RealField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit a normalizer on no data".into()))?;
        let ch = first.channels();
        let mut min = vec![f64::INFINITY; ch];
        let mut max = vec![f64::NEG_INFINITY; ch];
        for f in fields {
            if f.channels() != ch {
                return Err(Error::Shape("normalizer data has mixed channel counts".into()));
            }
            if !f.is_finite() {
                return Err(Error::NonFinite("normalizer data".into()));
            }
            for c in 0..ch {
                for &v in f.channel(c) {
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
            }
        }
        ResidualNormalizer::new(min, max)
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    fn check(&self, f: &RealField) -> Result<()> {
        if f.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} channels, field has {}",
                self.channels(),
                f.channels()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, r: &RealField) -> Result<RealField> {
        self.check(r)?;
        let mut out = r.clone();
        for c in 0..self.channels() {
            let (lo, span) = (self.min[c], self.max[c] - self.min[c]);
            for v in out.channel_mut(c) {
                *v = if span > 0.0 { 2.0 * (*v - lo) / span - 1.0 } else { 0.0 };
            }
        }
        Ok(out)
    }

    /// Exact inverse of [`normalize`](Self::normalize) on non-degenerate channels.
    pub fn denormalize(&self, x: &RealField) -> Result<RealField> {
        self.map_back(x, false)
    }

    /// Shift to `[0, 1]`, clamp, then undo the scaling.
    pub fn denormalize_clamped(&self, x: &RealField) -> Result<RealField> {
        self.map_back(x, true)
    }

    fn map_back(&self, x: &RealField, clamp: bool) -> Result<RealField> {
        self.check(x)?;
        let mut out = x.clone();
        for c in 0..self.channels() {
            let (lo, span) = (self.min[c], self.max[c] - self.min[c]);
            for v in out.channel_mut(c) {
                let mut unit = 0.5 * *v + 0.5;
                if clamp {
                    unit = unit.clamp(0.0, 1.0);
                }
                *v = unit * span + lo;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    fn field(data: Vec<f64>) -> RealField {
        let n = data.len() / 2;
        RealField::new(GridSpec::unit(&[n]).unwrap(), 2, data).unwrap()
    }

    #[test]
    fn fit_normalize_round_trip() {
        let f = field(vec![-1.0, 3.0, 0.5, 2.0, 2.0, 2.0]);
        let n = ResidualNormalizer::fit(&[f.clone()]).unwrap();
        assert_eq!(n.min, vec![-1.0, 2.0]);
        assert_eq!(n.max, vec![3.0, 2.0]);
        let x = n.normalize(&f).unwrap();
        assert_eq!(x.channel(0), &[-1.0, 1.0, -0.25]);
        assert_eq!(x.channel(1), &[0.0, 0.0, 0.0]);
        let back = n.denormalize(&x).unwrap();
        assert!(back.lincomb(1.0, &f, -1.0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn clamped_inverse_saturates() {
        let n = ResidualNormalizer::new(vec![0.0, 0.0], vec![4.0, 0.0]).unwrap();
        let y = n.denormalize_clamped(&field(vec![2.0, -3.0, 0.0, 5.0])).unwrap();
        assert_eq!(y.channel(0), &[4.0, 0.0]);
        assert_eq!(y.channel(1), &[0.0, 0.0]);
        assert!(ResidualNormalizer::new(vec![1.0], vec![0.0]).is_err());
        assert!(ResidualNormalizer::fit(&[]).is_err());
    }
}
