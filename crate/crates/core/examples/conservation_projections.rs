//! Mass (divergence-free) and momentum projections of a random vector field.

use rand::Rng;
use specproj::metrics::{divergence_loss, momentum_loss};
use specproj::projection::{
    compose_projection, InvariantConvP4, MassProjectionConfig, MomentumProjection, ProjectionParams,
    RotationInvariantKernel, Selector,
};
use specproj::rng;
use specproj::spectral::{GridSpec, RealField};

fn main() -> specproj::Result<()> {
    let g = GridSpec::unit(&[32, 32])?;
    let mut r = rng::stream(0, "example");
    let v = RealField::new(g.clone(), 2, (0..2 * g.len()).map(|_| r.random_range(-1.0..1.0)).collect())?;

    let padding = MomentumProjection::default_padding(&[32, 32]);
    let lattice: Vec<usize> = padding.iter().map(|p| 32 + p).collect();
    let params = ProjectionParams {
        mass: MassProjectionConfig::spatial(),
        momentum: Some(MomentumProjection {
            kernel: RotationInvariantKernel::random(&lattice, 2, 0.1, &mut r),
            w_inv: InvariantConvP4::new(0.9, 0.02, 0.005),
            padding,
        }),
    };
    // `both` applies mass then momentum, so a random kernel can reintroduce divergence.
    for selector in [Selector::None, Selector::Mass, Selector::Momentum, Selector::Both] {
        let out = compose_projection(&v, selector, &params)?;
        println!(
            "{selector:>8}: divergence loss {:.3e}, momentum loss vs input {:.3e}",
            divergence_loss(&out)?,
            momentum_loss(&out, &v)?
        );
    }
    Ok(())
}
