//! Flux-variable transform for the atmospheric shallow-water state.
//!
//! `(u_x, u_y, h) <-> (u_x h, u_y h sin(theta), R h sin(theta))`, where `theta` is given
//! per row of the first spatial axis. The transformed triple is divergence-free in
//! (lambda, theta, t) whenever mass is conserved, so it can go through the
//! spatiotemporal mass projection.

use crate::error::{Error, Result};
use crate::spectral::RealField;

fn row_sines(field: &RealField, theta: &[f64]) -> Result<(usize, Vec<f64>)> {
    let axis = *field
        .grid()
        .spatial_axes()
        .first()
        .ok_or_else(|| Error::Shape("latitude axis missing".into()))?;
    let rows = field.grid().axes()[axis].size;
    if theta.len() != rows {
        return Err(Error::Shape(format!(
            "{} latitudes for {} grid rows",
            theta.len(),
            rows
        )));
    }
    let sines: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
    if let Some(i) = sines.iter().position(|s| s.abs() < 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "sin(theta) vanishes at row {i}; the grid must exclude the poles"
        )));
    }
    Ok((axis, sines))
}

/// Row index along `axis` for every flat point.
fn row_of(field: &RealField, axis: usize) -> impl Fn(usize) -> usize + '_ {
    let st = field.grid().strides()[axis];
    let size = field.grid().axes()[axis].size;
    move |p| (p / st) % size
}

pub fn atmos_to_conserved(
    u_x: &RealField,
    u_y: &RealField,
    h: &RealField,
    radius: f64,
    theta: &[f64],
) -> Result<RealField> {
    for f in [u_x, u_y, h] {
        if f.channels() != 1 {
            return Err(Error::Shape("atmosphere inputs must be single-channel".into()));
        }
    }
    u_x.check_same_shape(u_y, "u_x vs u_y")?;
    u_x.check_same_shape(h, "u_x vs h")?;
    let (axis, sines) = row_sines(h, theta)?;
    let row = row_of(h, axis);
    let n = h.points();
    let mut data = vec![0.0; 3 * n];
    for p in 0..n {
        let s = sines[row(p)];
        let hv = h.data()[p];
        data[p] = u_x.data()[p] * hv;
        data[n + p] = u_y.data()[p] * hv * s;
        data[2 * n + p] = radius * hv * s;
    }
    RealField::new(h.grid().clone(), 3, data)
}

/// Inverse of [`atmos_to_conserved`]; returns `(u_x, u_y, h)`.
pub fn atmos_from_conserved(
    c: &RealField,
    radius: f64,
    theta: &[f64],
) -> Result<(RealField, RealField, RealField)> {
    if c.channels() != 3 {
        return Err(Error::Shape("conserved atmosphere state needs 3 channels".into()));
    }
    let (axis, sines) = row_sines(c, theta)?;
    let row = row_of(c, axis);
    let n = c.points();
    let (c0, c1, c2) = (c.channel(0), c.channel(1), c.channel(2));
    if let Some(p) = c2.iter().position(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "third conserved channel is zero at point {p}"
        )));
    }
    let mut ux = vec![0.0; n];
    let mut uy = vec![0.0; n];
    let mut h = vec![0.0; n];
    for p in 0..n {
        let s = sines[row(p)];
        h[p] = c2[p] / (radius * s);
        ux[p] = c0[p] / h[p];
        uy[p] = radius * c1[p] / c2[p];
    }
    let g = c.grid().clone();
    Ok((
        RealField::new(g.clone(), 1, ux)?,
        RealField::new(g.clone(), 1, uy)?,
        RealField::new(g, 1, h)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectral::GridSpec;
    use rand::Rng;

    fn lat_grid() -> (GridSpec, Vec<f64>) {
        let g = GridSpec::periodic(&[6, 8], &[1.0, 1.0]).unwrap();
        // colatitudes strictly inside (0, pi)
        let theta = (0..6).map(|i| (i as f64 + 0.5) * std::f64::consts::PI / 6.0).collect();
        (g, theta)
    }

    #[test]
    fn resting_atmosphere() {
        let (g, theta) = lat_grid();
        let zero = RealField::zeros(&g, 1);
        let h = RealField::from_fn(&g, 1, |_, _| 8500.0);
        let c = atmos_to_conserved(&zero, &zero, &h, 6.371e6, &theta).unwrap();
        for p in 0..g.len() {
            let s = theta[p / 8].sin();
            assert_eq!(c.channel(0)[p], 0.0);
            assert_eq!(c.channel(1)[p], 0.0);
            assert!((c.channel(2)[p] - 6.371e6 * 8500.0 * s).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_and_direct_recovery() {
        let (g, theta) = lat_grid();
        let mut r = rng::stream(2, "test/atmos");
        let mut rand_field = |lo: f64, hi: f64| {
            RealField::new(g.clone(), 1, (0..g.len()).map(|_| r.random_range(lo..hi)).collect()).unwrap()
        };
        let ux = rand_field(-20.0, 20.0);
        let uy = rand_field(-20.0, 20.0);
        let h = rand_field(100.0, 9000.0);
        let radius = 6.371e6;
        let c = atmos_to_conserved(&ux, &uy, &h, radius, &theta).unwrap();
        let (ux2, uy2, h2) = atmos_from_conserved(&c, radius, &theta).unwrap();
        for (a, b) in [(&ux, &ux2), (&uy, &uy2), (&h, &h2)] {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
        for p in 0..g.len() {
            let direct = radius * c.channel(1)[p] / c.channel(2)[p];
            assert!((direct - uy.data()[p]).abs() <= 1e-12 * uy.data()[p].abs().max(1.0));
        }
    }

    #[test]
    fn pole_rows_are_rejected() {
        let (g, mut theta) = lat_grid();
        theta[0] = 0.0;
        let h = RealField::from_fn(&g, 1, |_, _| 1.0);
        let z = RealField::zeros(&g, 1);
        assert!(atmos_to_conserved(&z, &z, &h, 1.0, &theta).is_err());
        let (_, theta) = lat_grid();
        let c = RealField::zeros(&g, 3);
        assert!(atmos_from_conserved(&c, 1.0, &theta).is_err());
    }
}
