//! Forward pass with a recorded tape, and its hand-written reverse pass.

use num_complex::Complex64;
use rayon::prelude::*;

use super::params::FnoParams;
use crate::error::{Error, Result};
use crate::projection::{crop_raw, mass_backward, momentum_backward, pad_raw, project_divergence_free, project_momentum, Selector};
use crate::spectral::modes::ModePair;
use crate::spectral::{forward_raw, inverse_raw, GridSpec, RealField};

/// One training example: input state, conditioning scalars and target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: RealField,
    pub cond: Vec<f64>,
    pub target: RealField,
}

/// `y[o] = sum_i w[o, i] x[i] + b[o]` at every grid point.
fn dense(w: &[f64], b: Option<&[f64]>, x: &[f64], cin: usize, cout: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; cout * n];
    for o in 0..cout {
        let yo = &mut y[o * n..(o + 1) * n];
        if let Some(b) = b {
            yo.fill(b[o]);
        }
        for i in 0..cin {
            let wi = w[o * cin + i];
            if wi != 0.0 {
                for (a, &xv) in yo.iter_mut().zip(&x[i * n..(i + 1) * n]) {
                    *a += wi * xv;
                }
            }
        }
    }
    y
}

/// Accumulates weight (and bias) gradients; returns the input adjoint.
fn dense_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    (cin, cout, n): (usize, usize, usize),
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; cin * n];
    for o in 0..cout {
        let dyo = &dy[o * n..(o + 1) * n];
        for i in 0..cin {
            let xi = &x[i * n..(i + 1) * n];
            gw[o * cin + i] += dyo.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            let wi = w[o * cin + i];
            if wi != 0.0 {
                for (d, &g) in dx[i * n..(i + 1) * n].iter_mut().zip(dyo) {
                    *d += wi * g;
                }
            }
        }
    }
    if let Some(gb) = gb {
        for o in 0..cout {
            gb[o] += dy[o * n..(o + 1) * n].iter().sum::<f64>();
        }
    }
    dx
}

/// Mode-wise channel mixing over the retained pairs; all other modes are zero.
/// `adjoint` applies the conjugate transpose of every mode matrix.
fn spectral_mix(kernel: &[Complex64], pairs: &[Option<ModePair>], x: &[Complex64], w: usize, n: usize, adjoint: bool) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut y = vec![zero; w * n];
    for (r, pair) in pairs.iter().enumerate() {
        let Some(pair) = pair else { continue };
        let block = &kernel[r * w * w..(r + 1) * w * w];
        for o in 0..w {
            let (mut at_idx, mut at_partner) = (zero, zero);
            for i in 0..w {
                // forward: out o, in i; adjoint: out i <- in o, i.e. entry (i, o)
                let k = if adjoint { block[i * w + o] } else { block[o * w + i] };
                if pair.is_self_conjugate() {
                    at_idx += x[i * n + pair.idx] * k.re;
                } else if adjoint {
                    at_idx += x[i * n + pair.idx] * k.conj();
                    at_partner += x[i * n + pair.partner] * k;
                } else {
                    at_idx += x[i * n + pair.idx] * k;
                    at_partner += x[i * n + pair.partner] * k.conj();
                }
            }
            y[o * n + pair.idx] = at_idx;
            if !pair.is_self_conjugate() {
                y[o * n + pair.partner] = at_partner;
            }
        }
    }
    y
}

/// Gradient of `Re sum_k conj(ybar(k)) K(k) x(k) / n` w.r.t. the free weights.
fn spectral_grad(pairs: &[Option<ModePair>], x: &[Complex64], ybar: &[Complex64], w: usize, n: usize, out: &mut [Complex64]) {
    let inv_n = 1.0 / n as f64;
    for (r, pair) in pairs.iter().enumerate() {
        let Some(pair) = pair else { continue };
        for o in 0..w {
            for i in 0..w {
                let gi = x[i * n + pair.idx] * ybar[o * n + pair.idx].conj() * inv_n;
                let gp = x[i * n + pair.partner] * ybar[o * n + pair.partner].conj() * inv_n;
                out[r * w * w + o * w + i] += pair.fold_grad(gi, gp);
            }
        }
    }
}

/// Intermediate values needed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    shape: Vec<usize>,
    pshape: Vec<usize>,
    selector: Selector,
    lifted: Vec<f64>,
    inputs: Vec<f64>,
    layer_in: Vec<Vec<f64>>,
    layer_pre: Vec<Vec<f64>>,
    trunk: Vec<f64>,
    head_pre: Vec<f64>,
    head: Vec<f64>,
    raw: RealField,
    mid: Option<RealField>,
}

fn padded_shape(params: &FnoParams, grid: &GridSpec) -> Vec<usize> {
    let mut shape = grid.shape();
    if params.hyper.time_padding > 0 {
        if let Some(t) = grid.temporal_axis() {
            shape[t] += params.hyper.time_padding;
        }
    }
    shape
}

fn check_input(params: &FnoParams, u: &RealField, cond: &[f64]) -> Result<()> {
    let h = &params.hyper;
    if u.channels() != h.in_ch {
        return Err(Error::Shape(format!("model expects {} input channels, got {}", h.in_ch, u.channels())));
    }
    if cond.len() != h.cond_ch {
        return Err(Error::Shape(format!("model expects {} conditioning values, got {}", h.cond_ch, cond.len())));
    }
    if u.grid().ndim() != h.modes.len() {
        return Err(Error::Shape(format!(
            "model has modes for {} axes, input grid has {}",
            h.modes.len(),
            u.grid().ndim()
        )));
    }
    if !u.is_finite() || cond.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("model input".into()));
    }
    Ok(())
}

/// Run the model with an explicit selector, keeping the tape.
pub fn forward_with_tape(params: &FnoParams, u: &RealField, cond: &[f64], selector: Selector) -> Result<(RealField, Tape)> {
    check_input(params, u, cond)?;
    let h = &params.hyper;
    let (w, a) = (h.width, h.in_ch + h.cond_ch);
    let shape = u.grid().shape();
    let n = u.points();
    let pshape = padded_shape(params, u.grid());
    let pn: usize = pshape.iter().product();

    let mut inputs = u.data().to_vec();
    for &c in cond {
        inputs.extend(std::iter::repeat_n(c, n));
    }
    let lifted = dense(&params.lift_w, Some(&params.lift_b), &inputs, a, w, n);
    let mut v = if pshape == shape { lifted.clone() } else { pad_raw(&lifted, w, &shape, &pshape) };
    let pairs = params.mode_box.pairs_on(&pshape)?;
    let mut layer_in = Vec::with_capacity(h.layers);
    let mut layer_pre = Vec::with_capacity(h.layers);
    for l in 0..h.layers {
        let x_hat = forward_raw(&v, &pshape);
        let spec = inverse_raw(&spectral_mix(&params.kernels[l], &pairs, &x_hat, w, pn, false), &pshape);
        let mut z = dense(&params.linears[l], None, &v, w, w, pn);
        for (zi, si) in z.iter_mut().zip(&spec) {
            *zi += si;
        }
        let next = z.iter().map(|&x| h.activation.apply(x)).collect();
        layer_in.push(std::mem::replace(&mut v, next));
        layer_pre.push(z);
    }
    let trunk = if pshape == shape { v } else { crop_raw(&v, w, &shape, &pshape) };
    let head_pre = dense(&params.head_w1, Some(&params.head_b1), &trunk, w, w, n);
    let head: Vec<f64> = head_pre.iter().map(|&x| h.activation.apply(x)).collect();
    let out = dense(&params.head_w2, Some(&params.head_b2), &head, w, h.out_ch, n);
    let raw = RealField::new(u.grid().clone(), h.out_ch, out)?;

    let mut mid = None;
    let output = match selector {
        Selector::None => raw.clone(),
        Selector::Mass => project_divergence_free(&raw, &params.projection.mass)?,
        Selector::Momentum => project_momentum(&raw, params.projection.momentum_stage()?)?,
        Selector::Both => {
            let m = project_divergence_free(&raw, &params.projection.mass)?;
            let out = project_momentum(&m, params.projection.momentum_stage()?)?;
            mid = Some(m);
            out
        }
    };
    let tape = Tape {
        shape,
        pshape,
        selector,
        lifted,
        inputs,
        layer_in,
        layer_pre,
        trunk,
        head_pre,
        head,
        raw,
        mid,
    };
    Ok((output, tape))
}

/// Plain operator output, no projection.
pub fn fno_forward(params: &FnoParams, u: &RealField, cond: &[f64]) -> Result<RealField> {
    forward_with_tape(params, u, cond, Selector::None).map(|(y, _)| y)
}

/// Operator output followed by the selected projection stage(s).
pub fn pcno_forward(params: &FnoParams, u: &RealField, cond: &[f64], selector: Selector) -> Result<RealField> {
    forward_with_tape(params, u, cond, selector).map(|(y, _)| y)
}

/// Forward pass with the model's own selector.
pub fn predict(params: &FnoParams, u: &RealField, cond: &[f64]) -> Result<RealField> {
    pcno_forward(params, u, cond, params.selector)
}

/// Gradients of a scalar loss w.r.t. every parameter, given `d loss / d output`.
pub fn backward(params: &FnoParams, tape: &Tape, dout: &RealField) -> Result<FnoParams> {
    if !dout.same_shape(&tape.raw) {
        return Err(Error::Shape("output adjoint does not match the tape".into()));
    }
    let h = &params.hyper;
    let (w, a) = (h.width, h.in_ch + h.cond_ch);
    let n: usize = tape.shape.iter().product();
    let pn: usize = tape.pshape.iter().product();
    let mut g = params.zeros_like();

    let proj = &params.projection;
    let draw = match tape.selector {
        Selector::None => dout.clone(),
        Selector::Mass => {
            let (dx, gs) = mass_backward(&tape.raw, dout, &proj.mass)?;
            store_spe(&mut g, gs);
            dx
        }
        Selector::Momentum => {
            let (dx, gk) = momentum_backward(&tape.raw, dout, proj.momentum_stage()?)?;
            store_momentum(&mut g, gk);
            dx
        }
        Selector::Both => {
            let mid = tape.mid.as_ref().ok_or_else(|| Error::Shape("tape lacks the mass stage".into()))?;
            let (dmid, gk) = momentum_backward(mid, dout, proj.momentum_stage()?)?;
            store_momentum(&mut g, gk);
            let (dx, gs) = mass_backward(&tape.raw, &dmid, &proj.mass)?;
            store_spe(&mut g, gs);
            dx
        }
    };

    let dhead = dense_backward(&params.head_w2, &tape.head, draw.data(), (w, h.out_ch, n), &mut g.head_w2, Some(&mut g.head_b2));
    let dhead_pre: Vec<f64> = dhead.iter().zip(&tape.head_pre).map(|(d, &x)| d * h.activation.derivative(x)).collect();
    let dtrunk = dense_backward(&params.head_w1, &tape.trunk, &dhead_pre, (w, w, n), &mut g.head_w1, Some(&mut g.head_b1));
    let mut dv = if tape.pshape == tape.shape { dtrunk } else { pad_raw(&dtrunk, w, &tape.shape, &tape.pshape) };

    let pairs = params.mode_box.pairs_on(&tape.pshape)?;
    for l in (0..h.layers).rev() {
        let dz: Vec<f64> = dv.iter().zip(&tape.layer_pre[l]).map(|(d, &x)| d * h.activation.derivative(x)).collect();
        let x = &tape.layer_in[l];
        let mut dx = dense_backward(&params.linears[l], x, &dz, (w, w, pn), &mut g.linears[l], None);
        let z_hat = forward_raw(&dz, &tape.pshape);
        let x_hat = forward_raw(x, &tape.pshape);
        spectral_grad(&pairs, &x_hat, &z_hat, w, pn, &mut g.kernels[l]);
        let back = inverse_raw(&spectral_mix(&params.kernels[l], &pairs, &z_hat, w, pn, true), &tape.pshape);
        for (d, b) in dx.iter_mut().zip(&back) {
            *d += b;
        }
        dv = dx;
    }
    let dlift = if tape.pshape == tape.shape { dv } else { crop_raw(&dv, w, &tape.shape, &tape.pshape) };
    debug_assert_eq!(tape.lifted.len(), dlift.len());
    dense_backward(&params.lift_w, &tape.inputs, &dlift, (a, w, n), &mut g.lift_w, Some(&mut g.lift_b));
    Ok(g)
}

fn store_spe(g: &mut FnoParams, grad: Option<Vec<Complex64>>) {
    if let (Some(s), Some(gs)) = (g.projection.mass.spectral_conv.as_mut(), grad) {
        s.weights_mut().copy_from_slice(&gs);
    }
}

fn store_momentum(g: &mut FnoParams, grad: Vec<Complex64>) {
    if let Some(m) = g.projection.momentum.as_mut() {
        m.kernel.free_half_mut().copy_from_slice(&grad);
    }
}

/// Mean over samples of `||pred - target||^2 / ||target||^2`.
pub fn loss_relative_mse(pred: &[RealField], target: &[RealField]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape("prediction and target batches differ".into()));
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target) {
        acc += relative_sq(p, t)?;
    }
    Ok(acc / pred.len() as f64)
}

fn relative_sq(p: &RealField, t: &RealField) -> Result<f64> {
    p.check_same_shape(t, "relative MSE")?;
    let denom = t.norm_sq();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("relative MSE target has zero norm".into()));
    }
    Ok(p.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / denom)
}

/// Loss and parameter gradient of one sample under the model's selector.
pub fn sample_loss_and_grad(params: &FnoParams, s: &Sample) -> Result<(f64, FnoParams)> {
    let (pred, tape) = forward_with_tape(params, &s.input, &s.cond, params.selector)?;
    let loss = relative_sq(&pred, &s.target)?;
    let scale = 2.0 / s.target.norm_sq();
    let dout: Vec<f64> = pred.data().iter().zip(s.target.data()).map(|(p, t)| scale * (p - t)).collect();
    let dout = RealField::new(pred.grid().clone(), pred.channels(), dout)?;
    Ok((loss, backward(params, &tape, &dout)?))
}

/// Mean loss and gradient over a batch. Samples run in parallel; the reduction is a
/// left fold in batch order, so the result does not depend on the thread count.
pub fn batch_loss_and_grad(params: &FnoParams, batch: &[&Sample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| sample_loss_and_grad(params, s).map(|(l, g)| (l, g.flatten())))
        .collect::<Result<_>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; parts[0].1.len()];
    for (l, g) in &parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|v| *v *= inv);
    Ok((loss * inv, grad))
}
