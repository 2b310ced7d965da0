//! Conservation projections applied to surrogate outputs.

mod atmos;
mod mass;
mod momentum;

use std::fmt;
use std::str::FromStr;

pub use atmos::{atmos_from_conserved, atmos_to_conserved};
pub use mass::{mass_axes, project_divergence_free, MassMode, MassProjectionConfig, SpectralMultiplier};
pub(crate) use mass::mass_backward;
pub use momentum::{project_momentum, InvariantConvP4, MomentumProjection, RotationInvariantKernel};
pub(crate) use momentum::{crop_raw, momentum_backward, pad_raw};

use crate::error::{Error, Result};
use crate::spectral::RealField;

/// Which projections [`compose_projection`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selector {
    #[default]
    None,
    Mass,
    Momentum,
    Both,
}

impl Selector {
    pub fn uses_mass(self) -> bool {
        matches!(self, Selector::Mass | Selector::Both)
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Selector::Momentum | Selector::Both)
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Selector::None),
            "mass" => Ok(Selector::Mass),
            "momentum" => Ok(Selector::Momentum),
            "both" => Ok(Selector::Both),
            other => Err(Error::Usage(format!(
                "unknown selector '{other}' (expected none|mass|momentum|both)"
            ))),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::None => "none",
            Selector::Mass => "mass",
            Selector::Momentum => "momentum",
            Selector::Both => "both",
        })
    }
}

/// Parameters for both stages; the momentum stage is required only when selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub mass: MassProjectionConfig,
    pub momentum: Option<MomentumProjection>,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            mass: MassProjectionConfig::spatial(),
            momentum: None,
        }
    }
}

impl ProjectionParams {
    pub(crate) fn momentum_stage(&self) -> Result<&MomentumProjection> {
        self.momentum
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("momentum projection selected without a kernel".into()))
    }
}

/// Mass stage first, then momentum.
pub fn compose_projection(v: &RealField, selector: Selector, params: &ProjectionParams) -> Result<RealField> {
    let mut out = match selector.uses_mass() {
        true => project_divergence_free(v, &params.mass)?,
        false => v.clone(),
    };
    if selector.uses_momentum() {
        out = project_momentum(&out, params.momentum_stage()?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::divergence_loss;
    use crate::rng;
    use crate::spectral::GridSpec;
    use rand::Rng;

    fn random_field(grid: &GridSpec, channels: usize, seed: u64) -> RealField {
        let mut r = rng::stream(seed, "test/field");
        let data = (0..channels * grid.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        RealField::new(grid.clone(), channels, data).unwrap()
    }

    #[test]
    fn selector_round_trips_through_text() {
        for s in [Selector::None, Selector::Mass, Selector::Momentum, Selector::Both] {
            assert_eq!(s.to_string().parse::<Selector>().unwrap(), s);
        }
        assert!("energy".parse::<Selector>().is_err());
    }

    #[test]
    fn none_is_identity() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let v = random_field(&g, 3, 1);
        let out = compose_projection(&v, Selector::None, &ProjectionParams::default()).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn both_with_unit_kernel_is_twice_the_mass_projection() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let v = random_field(&g, 2, 2);
        let params = ProjectionParams {
            mass: MassProjectionConfig::spatial(),
            momentum: Some(MomentumProjection::unit(&[16, 16], 2, MomentumProjection::default_padding(&[16, 16]))),
        };
        let out = compose_projection(&v, Selector::Both, &params).unwrap();
        assert!(divergence_loss(&out).unwrap() < 1e-10);
        let mass = compose_projection(&v, Selector::Mass, &params).unwrap();
        let err = out
            .data()
            .iter()
            .zip(mass.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - 2.0 * b).abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn mass_on_one_channel_fails() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let v = random_field(&g, 1, 3);
        assert!(compose_projection(&v, Selector::Mass, &ProjectionParams::default()).is_err());
        assert!(compose_projection(&v, Selector::Momentum, &ProjectionParams::default()).is_err());
    }
}
