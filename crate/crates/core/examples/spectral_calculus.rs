//! Spectral derivatives on a periodic grid and a FLD1 round trip.

use std::f64::consts::PI;

use specproj::spectral::{
    fft_forward, fft_inverse, read_fld, spectral_divergence, spectral_gradient, spectral_laplacian_inverse, write_fld,
    GridSpec, RealField,
};

fn main() -> specproj::Result<()> {
    let g = GridSpec::periodic(&[32, 32], &[2.0 * PI, 2.0 * PI])?;
    let f = RealField::from_fn(&g, 1, |_, x| (2.0 * x[0]).sin() * x[1].cos());

    let s = fft_forward(&f)?;
    let dfdx = fft_inverse(&spectral_gradient(&s, 0)?)?;
    let exact = RealField::from_fn(&g, 1, |_, x| 2.0 * (2.0 * x[0]).cos() * x[1].cos());
    let err = dfdx.lincomb(1.0, &exact, -1.0)?.max_abs();
    println!("d/dx error: {err:.2e}");

    // Poisson solve: the Laplacian of f is -5 f, so inverting it gives -f / 5.
    let phi = fft_inverse(&spectral_laplacian_inverse(&s)?)?;
    println!("Poisson error: {:.2e}", phi.lincomb(1.0, &f, 1.0 / 5.0)?.max_abs());

    let v = RealField::from_fn(&g, 2, |c, x| if c == 0 { x[1].sin() } else { x[0].cos() });
    let div = fft_inverse(&spectral_divergence(&fft_forward(&v)?, &[0, 1])?)?;
    println!("divergence of a shear flow: {:.2e}", div.max_abs());

    let path = std::env::temp_dir().join("specproj_example.fld");
    write_fld(&f, &path)?;
    let back = read_fld(&path)?;
    println!("FLD1 round trip exact: {}", back.data() == f.data());
    Ok(())
}
