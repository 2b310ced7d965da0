//! Forecast metrics and a per-step report.

use specproj::metrics::{csi, high_corr_step, mean_correlation_per_step, mse, nrmse, MetricReport};
use specproj::spectral::{GridSpec, RealField};

fn main() -> specproj::Result<()> {
    let g = GridSpec::unit(&[16, 16])?;
    let truth: Vec<RealField> = (0..6)
        .map(|t| RealField::from_fn(&g, 1, |_, x| (6.0 * x[0] + 0.3 * t as f64).sin().max(0.0)))
        .collect();
    // A forecast whose phase error grows with lead time.
    let pred: Vec<RealField> = (0..6)
        .map(|t| RealField::from_fn(&g, 1, |_, x| (6.0 * x[0] + 0.3 * t as f64 + 0.15 * t as f64).sin().max(0.0)))
        .collect();

    let mut report = MetricReport::new(g.shape());
    report.set_threshold("csi", 0.5);
    for (p, t) in pred.iter().zip(&truth) {
        report.push("nrmse", nrmse(std::slice::from_ref(p), std::slice::from_ref(t))?);
        report.push("mse", mse(std::slice::from_ref(p), std::slice::from_ref(t))?);
        report.push("csi", csi(p, t, 0.5)?);
    }
    let r = mean_correlation_per_step(&[pred], &[truth])?;
    report.set_summary("high_corr_step.0.9", high_corr_step(&r, 0.9).map_or("none".into(), |s| s.to_string()));
    print!("{}", report.to_text());
    print!("{}", report.to_csv());
    Ok(())
}
