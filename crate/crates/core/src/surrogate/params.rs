use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::projection::{
    InvariantConvP4, MassMode, MassProjectionConfig, MomentumProjection, ProjectionParams, RotationInvariantKernel,
    Selector, SpectralMultiplier,
};
use crate::spectral::modes::ModeBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// tanh approximation of GELU.
    Gelu,
    /// Test hook: no nonlinearity.
    Identity,
}

impl Activation {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    const A: f64 = 0.044715;

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (Self::C * (x + Self::A * x * x * x)).tanh()),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = (Self::C * (x + Self::A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * Self::C * (1.0 + 3.0 * Self::A * x * x)
            }
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Usage(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        })
    }
}

/// Architecture of a Fourier neural operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FnoHyper {
    /// Field channels of the input state.
    pub in_ch: usize,
    /// Conditioning scalars, appended as constant channels.
    pub cond_ch: usize,
    pub out_ch: usize,
    pub width: usize,
    /// Retained Fourier modes per grid axis.
    pub modes: Vec<usize>,
    pub layers: usize,
    pub activation: Activation,
    /// Zero frames appended to the temporal axis (if any) inside the Fourier layers.
    pub time_padding: usize,
}

impl FnoHyper {
    /// Width 20, 12 modes per axis, 4 layers.
    pub fn new(in_ch: usize, out_ch: usize, ndim: usize) -> Self {
        FnoHyper {
            in_ch,
            cond_ch: 0,
            out_ch,
            width: 20,
            modes: vec![12; ndim],
            layers: 4,
            activation: Activation::Gelu,
            time_padding: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_ch == 0 || self.out_ch == 0 || self.width == 0 || self.modes.is_empty() {
            return Err(Error::InvalidArgument(format!("degenerate FNO hyperparameters {self:?}")));
        }
        ModeBox::new(&self.modes).map(|_| ())
    }
}

/// Which parameter group a flat range belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
    pub complex: bool,
}

/// All learnable weights, plus the projection stage that travels with the model.
///
/// Gradients use the same type: see [`FnoParams::zeros_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct FnoParams {
    pub hyper: FnoHyper,
    pub(crate) mode_box: ModeBox,
    /// `width x (in_ch + cond_ch)`, row-major.
    pub lift_w: Vec<f64>,
    pub lift_b: Vec<f64>,
    /// Per layer: `[rep][out][in]` complex weights over the non-redundant modes.
    pub kernels: Vec<Vec<Complex64>>,
    /// Per layer: `width x width`.
    pub linears: Vec<Vec<f64>>,
    pub head_w1: Vec<f64>,
    pub head_b1: Vec<f64>,
    /// `out_ch x width`.
    pub head_w2: Vec<f64>,
    pub head_b2: Vec<f64>,
    pub selector: Selector,
    pub projection: ProjectionParams,
}

fn uniform(n: usize, bound: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl FnoParams {
    /// Randomly initialised plain FNO (selector `none`).
    pub fn init(hyper: FnoHyper, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        let mode_box = ModeBox::new(&hyper.modes)?;
        let w = hyper.width;
        let a = hyper.in_ch + hyper.cond_ch;
        let kscale = 1.0 / (w * w) as f64;
        let kernels = (0..hyper.layers)
            .map(|_| {
                (0..mode_box.len() * w * w)
                    .map(|_| Complex64::new(kscale * rng.random::<f64>(), kscale * rng.random::<f64>()))
                    .collect()
            })
            .collect();
        let lin = 1.0 / (w as f64).sqrt();
        let linears = (0..hyper.layers).map(|_| uniform(w * w, lin, rng)).collect();
        let lift = 1.0 / (a as f64).sqrt();
        Ok(FnoParams {
            lift_w: uniform(w * a, lift, rng),
            lift_b: uniform(w, lift, rng),
            kernels,
            linears,
            head_w1: uniform(w * w, lin, rng),
            head_b1: uniform(w, lin, rng),
            head_w2: uniform(hyper.out_ch * w, lin, rng),
            head_b2: uniform(hyper.out_ch, lin, rng),
            mode_box,
            selector: Selector::None,
            projection: ProjectionParams {
                mass: MassProjectionConfig::spatial(),
                momentum: None,
            },
            hyper,
        })
    }

    /// Attach a projection stage. `w_spe_modes` adds learnable mass-stage multipliers;
    /// `momentum_grid` (unpadded grid shape) adds a learnable momentum kernel.
    pub fn with_projection(
        mut self,
        selector: Selector,
        mass_mode: MassMode,
        w_spe_modes: Option<&[usize]>,
        momentum_grid: Option<(&[usize], Vec<usize>, InvariantConvP4)>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let ch = self.hyper.out_ch;
        let spectral_conv = match w_spe_modes {
            Some(m) => {
                let mut s = SpectralMultiplier::identity(m, ch)?;
                for w in s.weights_mut() {
                    *w += Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                }
                Some(s)
            }
            None => None,
        };
        let momentum = match momentum_grid {
            Some((shape, padding, w_inv)) => {
                let lattice: Vec<usize> = shape.iter().zip(&padding).map(|(n, p)| n + p).collect();
                let mut kernel = RotationInvariantKernel::unit(&lattice, ch);
                for w in kernel.free_half_mut() {
                    *w += Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                }
                Some(MomentumProjection { kernel, w_inv, padding })
            }
            None => None,
        };
        if selector.uses_momentum() && momentum.is_none() {
            return Err(Error::InvalidArgument("momentum selector needs a momentum grid".into()));
        }
        self.selector = selector;
        self.projection = ProjectionParams {
            mass: MassProjectionConfig {
                mode: mass_mode,
                spectral_conv,
            },
            momentum,
        };
        Ok(self)
    }

    pub fn mode_box(&self) -> &ModeBox {
        &self.mode_box
    }

    /// Same structure, every learnable value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, g| match g {
            GroupMut::Real(v) => v.fill(0.0),
            GroupMut::Complex(v) => v.fill(Complex64::new(0.0, 0.0)),
        });
        z
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&str, GroupRef<'_>)) {
        f("lift.w", GroupRef::Real(&self.lift_w));
        f("lift.b", GroupRef::Real(&self.lift_b));
        for l in 0..self.hyper.layers {
            f(&format!("layer{l}.spectral"), GroupRef::Complex(&self.kernels[l]));
            f(&format!("layer{l}.linear"), GroupRef::Real(&self.linears[l]));
        }
        f("head.w1", GroupRef::Real(&self.head_w1));
        f("head.b1", GroupRef::Real(&self.head_b1));
        f("head.w2", GroupRef::Real(&self.head_w2));
        f("head.b2", GroupRef::Real(&self.head_b2));
        if let Some(s) = &self.projection.mass.spectral_conv {
            f("proj.w_spe", GroupRef::Complex(s.weights()));
        }
        if let Some(m) = &self.projection.momentum {
            f("proj.momentum", GroupRef::Complex(m.kernel.free_half()));
        }
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&str, GroupMut<'_>)) {
        f("lift.w", GroupMut::Real(&mut self.lift_w));
        f("lift.b", GroupMut::Real(&mut self.lift_b));
        for l in 0..self.hyper.layers {
            f(&format!("layer{l}.spectral"), GroupMut::Complex(&mut self.kernels[l]));
            f(&format!("layer{l}.linear"), GroupMut::Real(&mut self.linears[l]));
        }
        f("head.w1", GroupMut::Real(&mut self.head_w1));
        f("head.b1", GroupMut::Real(&mut self.head_b1));
        f("head.w2", GroupMut::Real(&mut self.head_w2));
        f("head.b2", GroupMut::Real(&mut self.head_b2));
        if let Some(s) = &mut self.projection.mass.spectral_conv {
            f("proj.w_spe", GroupMut::Complex(s.weights_mut()));
        }
        if let Some(m) = &mut self.projection.momentum {
            f("proj.momentum", GroupMut::Complex(m.kernel.free_half_mut()));
        }
    }

    /// Named ranges into [`FnoParams::flatten`]; complex groups store `(re, im)` pairs.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::new();
        let mut at = 0;
        self.visit(&mut |name, g| {
            let (len, complex) = match g {
                GroupRef::Real(v) => (v.len(), false),
                GroupRef::Complex(v) => (2 * v.len(), true),
            };
            out.push(ParamGroup {
                name: name.to_string(),
                range: at..at + len,
                complex,
            });
            at += len;
        });
        out
    }

    pub fn num_params(&self) -> usize {
        self.groups().last().map_or(0, |g| g.range.end)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |_, g| match g {
            GroupRef::Real(v) => out.extend_from_slice(v),
            GroupRef::Complex(v) => out.extend(v.iter().flat_map(|c| [c.re, c.im])),
        });
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        self.visit_mut(&mut |_, g| match g {
            GroupMut::Real(v) => {
                v.copy_from_slice(&flat[at..at + v.len()]);
                at += v.len();
            }
            GroupMut::Complex(v) => {
                for c in v.iter_mut() {
                    *c = Complex64::new(flat[at], flat[at + 1]);
                    at += 2;
                }
            }
        });
        Ok(())
    }

    /// `self += a * other` over every learnable value.
    pub fn axpy(&mut self, a: f64, other: &FnoParams) -> Result<()> {
        let mut flat = self.flatten();
        let o = other.flatten();
        if o.len() != flat.len() {
            return Err(Error::Shape("parameter structures differ".into()));
        }
        for (x, y) in flat.iter_mut().zip(&o) {
            *x += a * y;
        }
        self.set_flat(&flat)
    }
}

pub(crate) enum GroupRef<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

pub(crate) enum GroupMut<'a> {
    Real(&'a mut [f64]),
    Complex(&'a mut [Complex64]),
}
