//! Dense consistency-model denoiser `f(x, t) = c_skip(t) x + c_out(t) F(c_in(t) x, t, cond)`.

use rand::Rng;

use super::schedule::{skip_out_coeffs, NoiseSchedule};
use crate::error::{Error, Result};
use crate::surrogate::Activation;

/// Two hidden GELU layers over `[c_in x, cond, embed(ln t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
    /// Number of sinusoidal time features (even).
    pub embed: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Activations kept for one backward pass.
#[derive(Debug, Clone)]
pub struct DenoiserTape {
    input: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    c_out: f64,
}

const ACT: Activation = Activation::Gelu;

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + w[o * x.len()..(o + 1) * x.len()].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    for (o, &d) in dy.iter().enumerate() {
        gb[o] += d;
        if d == 0.0 {
            continue;
        }
        let row = &w[o * n..(o + 1) * n];
        for i in 0..n {
            gw[o * n + i] += d * x[i];
            dx[i] += d * row[i];
        }
    }
    dx
}

fn uniform(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let b = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-b..b)).collect()
}

impl ToyDenoiser {
    /// Hidden layers start uniform in `+-1/sqrt(fan_in)`; the output layer starts at zero,
    /// so an untrained model returns `c_skip(t) x`.
    pub fn new(dim: usize, cond_dim: usize, hidden: usize, embed: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim == 0 || hidden == 0 || embed % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "denoiser needs dim > 0, hidden > 0 and an even embedding (got {dim}, {hidden}, {embed})"
            )));
        }
        let fan = dim + cond_dim + embed;
        Ok(ToyDenoiser {
            dim,
            cond_dim,
            hidden,
            embed,
            w1: uniform(hidden * fan, fan, rng),
            b1: uniform(hidden, fan, rng),
            w2: uniform(hidden * hidden, hidden, rng),
            b2: uniform(hidden, hidden, rng),
            w3: vec![0.0; dim * hidden],
            b3: vec![0.0; dim],
        })
    }

    fn embedding(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let c = 0.25 * t.ln();
        (0..self.embed / 2).flat_map(move |j| {
            let a = c * f64::from(1u32 << j.min(30));
            [a.sin(), a.cos()]
        })
    }

    fn check(&self, x: &[f64], cond: &[f64]) -> Result<()> {
        if x.len() != self.dim || cond.len() != self.cond_dim {
            return Err(Error::Shape(format!(
                "denoiser expects {} + {} inputs, got {} + {}",
                self.dim,
                self.cond_dim,
                x.len(),
                cond.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], t: f64, cond: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
        self.forward_with_tape(x, t, cond, sched).map(|(y, _)| y)
    }

    pub fn forward_with_tape(&self, x: &[f64], t: f64, cond: &[f64], sched: &NoiseSchedule) -> Result<(Vec<f64>, DenoiserTape)> {
        self.check(x, cond)?;
        let (c_skip, c_out) = skip_out_coeffs(t, sched)?;
        let c_in = 1.0 / (t * t + sched.sigma_data * sched.sigma_data).sqrt();
        let mut input: Vec<f64> = x.iter().map(|v| c_in * v).collect();
        input.extend_from_slice(cond);
        input.extend(self.embedding(t));
        let a1 = affine(&self.w1, &self.b1, &input);
        let h1: Vec<f64> = a1.iter().map(|&v| ACT.apply(v)).collect();
        let a2 = affine(&self.w2, &self.b2, &h1);
        let h2: Vec<f64> = a2.iter().map(|&v| ACT.apply(v)).collect();
        let raw = affine(&self.w3, &self.b3, &h2);
        let y = x.iter().zip(&raw).map(|(xv, r)| c_skip * xv + c_out * r).collect();
        Ok((y, DenoiserTape { input, a1, h1, a2, h2, c_out }))
    }

    /// Accumulate parameter gradients of a loss with `dy = d loss / d f` into `grad`.
    pub fn backward(&self, tape: &DenoiserTape, dy: &[f64], grad: &mut ToyDenoiser) {
        let draw: Vec<f64> = dy.iter().map(|d| tape.c_out * d).collect();
        let dh2 = affine_backward(&self.w3, &tape.h2, &draw, &mut grad.w3, &mut grad.b3);
        let da2: Vec<f64> = dh2.iter().zip(&tape.a2).map(|(d, &a)| d * ACT.derivative(a)).collect();
        let dh1 = affine_backward(&self.w2, &tape.h1, &da2, &mut grad.w2, &mut grad.b2);
        let da1: Vec<f64> = dh1.iter().zip(&tape.a1).map(|(d, &a)| d * ACT.derivative(a)).collect();
        affine_backward(&self.w1, &tape.input, &da1, &mut grad.w1, &mut grad.b1);
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for v in z.groups_mut() {
            v.1.fill(0.0);
        }
        z
    }

    pub fn groups(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("w3", &self.w3),
            ("b3", &self.b3),
        ]
    }

    pub(crate) fn groups_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("w3", &mut self.w3),
            ("b3", &mut self.b3),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.groups().iter().map(|g| g.1.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.groups().iter().flat_map(|g| g.1.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut at = 0;
        for (_, v) in self.groups_mut() {
            let n = v.len();
            v.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn untrained_model_is_the_skip_path() {
        let s = NoiseSchedule::default();
        let d = ToyDenoiser::new(3, 2, 8, 4, &mut rng::stream(1, "t")).unwrap();
        let x = [0.5, -1.0, 2.0];
        let y = d.forward(&x, 3.0, &[0.1, 0.2], &s).unwrap();
        let (skip, _) = skip_out_coeffs(3.0, &s).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert_eq!(*a, skip * b);
        }
        assert_eq!(d.forward(&x, s.t_min, &[0.1, 0.2], &s).unwrap(), x.to_vec());
        assert!(d.forward(&x, 1.0, &[0.1], &s).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = NoiseSchedule::default();
        let mut r = rng::stream(2, "t");
        let mut d = ToyDenoiser::new(3, 2, 5, 4, &mut r).unwrap();
        d.w3 = (0..d.w3.len()).map(|_| r.random_range(-0.5..0.5)).collect();
        d.b3 = vec![0.1, -0.2, 0.3];
        let x = [0.3, -0.7, 1.1];
        let cond = [0.4, -0.1];
        let probe = [0.9, -0.4, 0.25];
        let loss = |m: &ToyDenoiser| -> f64 {
            m.forward(&x, 1.7, &cond, &s).unwrap().iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, tape) = d.forward_with_tape(&x, 1.7, &cond, &s).unwrap();
        let mut g = d.zeros_like();
        d.backward(&tape, &probe, &mut g);
        let analytic = g.flatten();
        let base = d.flatten();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = d.clone();
            let mut f = base.clone();
            f[i] += h;
            p.set_flat(&f).unwrap();
            let up = loss(&p);
            f[i] -= 2.0 * h;
            p.set_flat(&f).unwrap();
            let fd = (up - loss(&p)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", analytic[i]);
        }
    }
}
