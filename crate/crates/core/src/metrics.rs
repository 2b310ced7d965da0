//! Evaluation metrics and report export.
//!
//! Sample-wise metrics take slices of fields; each field is one sample, flattened over
//! channels and grid. Per-step reporting passes one field per rollout step.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectral::{forward_raw, inverse_raw, derivative_wavenumber_field, RealField};
use num_complex::Complex64;

fn check_pairs(pred: &[RealField], truth: &[RealField]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} references",
            pred.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        p.check_same_shape(t, &format!("sample {i}"))?;
    }
    Ok(())
}

fn diff_sq(a: &RealField, b: &RealField) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Mean over samples of `||pred - truth|| / ||truth||`.
pub fn nrmse(pred: &[RealField], truth: &[RealField]) -> Result<f64> {
    check_pairs(pred, truth)?;
    let mut acc = 0.0;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let denom = t.norm_sq();
        if denom == 0.0 {
            return Err(Error::InvalidArgument(format!("reference sample {i} has zero norm")));
        }
        acc += (diff_sq(p, t) / denom).sqrt();
    }
    Ok(acc / pred.len() as f64)
}

/// Mean over samples of `||pred - truth||^2` (summed, not averaged, over points).
pub fn mse(pred: &[RealField], truth: &[RealField]) -> Result<f64> {
    check_pairs(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| diff_sq(p, t)).sum::<f64>() / pred.len() as f64)
}

/// Pearson correlation of the flattened values; 0 when either side is constant.
pub fn pearson(pred: &RealField, truth: &RealField) -> Result<f64> {
    pred.check_same_shape(truth, "pearson")?;
    Ok(pearson_slices(pred.data(), truth.data()))
}

pub(crate) fn pearson_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Correlation per step, averaged over test trajectories.
/// `pred[j][s]` is step `s` of trajectory `j`.
pub fn mean_correlation_per_step(pred: &[Vec<RealField>], truth: &[Vec<RealField>]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape("trajectory counts differ or are zero".into()));
    }
    let steps = pred[0].len();
    let mut out = vec![0.0; steps];
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != steps || t.len() != steps {
            return Err(Error::Shape("trajectories differ in length".into()));
        }
        for s in 0..steps {
            out[s] += pearson(&p[s], &t[s])?;
        }
    }
    let n = pred.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// First step whose mean correlation drops below `threshold`; `None` if it never does.
pub fn high_corr_step(mean_r: &[f64], threshold: f64) -> Option<usize> {
    mean_r.iter().position(|&r| r < threshold)
}

fn divergence_axes(v: &RealField) -> Result<Vec<usize>> {
    let g = v.grid();
    let spatial = g.spatial_axes();
    if v.channels() == spatial.len() {
        return Ok(spatial);
    }
    if let Some(t) = g.temporal_axis() {
        if v.channels() == spatial.len() + 1 {
            let mut axes = vec![t];
            axes.extend(spatial);
            return Ok(axes);
        }
    }
    Err(Error::Shape(format!(
        "divergence of a {}-channel field on a grid with {} spatial axes",
        v.channels(),
        spatial.len()
    )))
}

/// Pointwise spectral divergence of a vector field.
pub fn divergence_field(v: &RealField) -> Result<RealField> {
    let axes = divergence_axes(v)?;
    let g = v.grid();
    let shape = g.shape();
    let n = g.len();
    let coeffs = forward_raw(v.data(), &shape);
    let mut div = vec![Complex64::new(0.0, 0.0); n];
    for (c, &a) in axes.iter().enumerate() {
        let k = derivative_wavenumber_field(g, a);
        for p in 0..n {
            div[p] += coeffs[c * n + p] * Complex64::new(0.0, k[p]);
        }
    }
    RealField::new(g.clone(), 1, inverse_raw(&div, &shape))
}

/// Mean absolute spectral divergence over grid points.
pub fn divergence_loss(v: &RealField) -> Result<f64> {
    let d = divergence_field(v)?;
    Ok(d.data().iter().map(|x| x.abs()).sum::<f64>() / d.points() as f64)
}

/// `(1/N) || sum_i pred_i - sum_i ref_i ||^2`, sums per channel over the `N` grid points.
pub fn momentum_loss(pred: &RealField, reference: &RealField) -> Result<f64> {
    pred.check_same_shape(reference, "momentum loss")?;
    let n = pred.points();
    let mut acc = 0.0;
    for c in 0..pred.channels() {
        let d: f64 = pred.channel(c).iter().sum::<f64>() - reference.channel(c).iter().sum::<f64>();
        acc += d * d;
    }
    Ok(acc / n as f64)
}

/// Contingency counts of cells strictly above `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsiCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl CsiCounts {
    pub fn score(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }
}

pub fn csi_counts(pred: &RealField, truth: &RealField, gamma: f64) -> Result<CsiCounts> {
    pred.check_same_shape(truth, "csi")?;
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("CSI threshold must be positive, got {gamma}")));
    }
    let mut c = CsiCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p > gamma, t > gamma) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Critical success index; 1 when neither field has a wet cell.
pub fn csi(pred: &RealField, truth: &RealField, gamma: f64) -> Result<f64> {
    Ok(csi_counts(pred, truth, gamma)?.score())
}

/// Per-step metric values plus thresholds and grid metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub grid: Vec<usize>,
    pub thresholds: Vec<(String, f64)>,
    /// Whole-run values such as the high-correlation horizon.
    pub summary: Vec<(String, String)>,
    series: Vec<(String, Vec<f64>)>,
}

impl MetricReport {
    pub fn new(grid: Vec<usize>) -> Self {
        MetricReport {
            grid,
            ..Default::default()
        }
    }

    pub fn set_threshold(&mut self, name: &str, value: f64) {
        match self.thresholds.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.thresholds.push((name.to_string(), value)),
        }
    }

    pub fn set_summary(&mut self, name: &str, value: impl ToString) {
        let value = value.to_string();
        match self.summary.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.summary.push((name.to_string(), value)),
        }
    }

    /// Append the next step's value of `metric`.
    pub fn push(&mut self, metric: &str, value: f64) {
        match self.series.iter_mut().find(|(n, _)| n == metric) {
            Some((_, v)) => v.push(value),
            None => self.series.push((metric.to_string(), vec![value])),
        }
    }

    pub fn metrics(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|(n, _)| n.as_str())
    }

    pub fn per_step(&self, metric: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == metric).map(|(_, v)| v.as_slice())
    }

    /// Mean over steps.
    pub fn aggregate(&self, metric: &str) -> Option<f64> {
        self.per_step(metric)
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let grid: Vec<String> = self.grid.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "grid = {}", grid.join("x"));
        for (name, v) in &self.thresholds {
            let _ = writeln!(s, "threshold.{name} = {v}");
        }
        for (name, v) in &self.summary {
            let _ = writeln!(s, "{name} = {v}");
        }
        for (name, v) in &self.series {
            let _ = writeln!(s, "{name} = {}", self.aggregate(name).unwrap_or(f64::NAN));
            let _ = writeln!(s, "{name}.steps = {}", v.len());
        }
        s
    }

    /// `step,metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,metric,value\n");
        for (name, v) in &self.series {
            for (i, x) in v.iter().enumerate() {
                let _ = writeln!(s, "{i},{name},{x}");
            }
        }
        s
    }

    /// Rebuild the per-step series from [`MetricReport::to_csv`] output.
    pub fn from_csv(text: &str, grid: Vec<usize>) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("step,metric,value") {
            return Err(Error::Format("metric CSV header missing".into()));
        }
        let mut r = MetricReport::new(grid);
        for (ln, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("metric CSV line {}: '{line}'", ln + 2));
            if parts.len() != 3 {
                return Err(bad());
            }
            let step: usize = parts[0].parse().map_err(|_| bad())?;
            let value: f64 = parts[2].parse().map_err(|_| bad())?;
            if r.per_step(parts[1]).map_or(0, |v| v.len()) != step {
                return Err(bad());
            }
            r.push(parts[1], value);
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use std::f64::consts::PI;

    fn field(vals: Vec<f64>) -> RealField {
        let g = GridSpec::unit(&[vals.len()]).unwrap();
        RealField::new(g, 1, vals).unwrap()
    }

    #[test]
    fn nrmse_and_mse_examples() {
        let t = field(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(nrmse(&[t.clone()], &[t.clone()]).unwrap(), 0.0);
        assert_eq!(nrmse(&[t.scaled(0.0)], &[t.clone()]).unwrap(), 1.0);
        assert!((nrmse(&[t.scaled(2.0)], &[t.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let shifted = field(t.data().iter().map(|v| v + 1.0).collect());
        assert_eq!(mse(&[shifted.clone()], &[t.clone()]).unwrap(), 4.0);
        // sample errors 4 and 0 -> mean 2
        assert_eq!(mse(&[shifted, t.clone()], &[t.clone(), t.clone()]).unwrap(), 2.0);
        assert!(nrmse(&[t.clone()], &[t.scaled(0.0)]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let t = field(vec![1.0, 4.0, 2.0, 8.0]);
        assert!((pearson(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg = field(t.data().iter().map(|v| 3.0 - v).collect());
        assert!((pearson(&neg, &t).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&field(vec![2.0; 4]), &t).unwrap(), 0.0);
        assert_eq!(high_corr_step(&[0.99, 0.95, 0.85, 0.7], 0.9), Some(2));
        assert_eq!(high_corr_step(&[0.99, 0.95], 0.9), None);
    }

    #[test]
    fn four_point_divergence_is_pi() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let v = RealField::from_fn(&g, 2, |c, x| if c == 0 { (2.0 * PI * x[0]).sin() } else { 0.0 });
        assert!((divergence_loss(&v).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn momentum_loss_examples() {
        let r = field(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(momentum_loss(&r, &r).unwrap(), 0.0);
        let p = field(r.data().iter().map(|v| v + 0.5).collect());
        assert!((momentum_loss(&p, &r).unwrap() - 1.0).abs() < 1e-12);
        let q = field(p.data().iter().zip([0.3, -0.3, 0.1, -0.1]).map(|(a, b)| a + b).collect());
        assert!((momentum_loss(&q, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csi_examples() {
        // TP = 3, FP = 1, FN = 1
        let p = field(vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let t = field(vec![1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((csi(&p, &t, 0.5).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(csi(&t, &t, 0.5).unwrap(), 1.0);
        assert_eq!(csi(&field(vec![0.0; 6]), &field(vec![0.01; 6]), 0.05).unwrap(), 1.0);
        // strictly greater than the threshold
        assert_eq!(csi_counts(&field(vec![0.5, 0.6]), &field(vec![0.5, 0.4]), 0.5).unwrap(), CsiCounts { tp: 0, fp: 1, fn_: 0 });
        assert!(csi(&p, &t, 0.0).is_err());
    }

    #[test]
    fn report_round_trip() {
        let mut r = MetricReport::new(vec![8, 8]);
        r.set_threshold("csi", 0.05);
        for v in [0.1, 0.25, 1.0 / 3.0] {
            r.push("nrmse", v);
            r.push("mse", v * v);
        }
        assert!((r.aggregate("nrmse").unwrap() - (0.1 + 0.25 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        let back = MetricReport::from_csv(&r.to_csv(), vec![8, 8]).unwrap();
        assert_eq!(back.per_step("nrmse"), r.per_step("nrmse"));
        assert_eq!(back.per_step("mse"), r.per_step("mse"));
        assert!(r.to_text().contains("threshold.csi = 0.05"));
    }
}
