//! Periodic-grid fields, Fourier transforms, spectral calculus and FLD1 file I/O.

mod calculus;
mod fft;
pub mod fld;
mod grid;
pub mod modes;

pub use calculus::{
    is_nyquist, signed_frequency, spectral_divergence, spectral_gradient, spectral_laplacian,
    spectral_laplacian_inverse, Wavenumbers,
};
pub(crate) use calculus::derivative_wavenumber_field;
pub use fft::{fft_center_shift, fft_forward, fft_inverse, ShiftDirection, SpectralField};
pub(crate) use fft::{center_shift_raw, forward_raw, inverse_raw};
#[cfg(test)]
pub(crate) use fft::transform;
pub use fld::{read_fld, write_fld, FldTensor};
pub use grid::{Axis, AxisKind, GridSpec, RealField};
pub(crate) use grid::{strides, unravel};
