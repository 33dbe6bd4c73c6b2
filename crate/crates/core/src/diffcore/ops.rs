//! Candidate operations and the dense kernels behind them.
//!
//! All spatial kernels are stride 1 with "same" zero padding, so every
//! operation maps `[B, C, H, W]` to `[B, C, H, W]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One candidate operation on a cell edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "skip_connect")]
    SkipConnect,
    #[serde(rename = "conv_3x3")]
    Conv3x3,
    #[serde(rename = "conv_1x1")]
    Conv1x1,
    #[serde(rename = "avg_pool_3x3")]
    AvgPool3x3,
    #[serde(rename = "max_pool_3x3")]
    MaxPool3x3,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Zero,
        OpKind::SkipConnect,
        OpKind::Conv3x3,
        OpKind::Conv1x1,
        OpKind::AvgPool3x3,
        OpKind::MaxPool3x3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::SkipConnect => "skip_connect",
            OpKind::Conv3x3 => "conv_3x3",
            OpKind::Conv1x1 => "conv_1x1",
            OpKind::AvgPool3x3 => "avg_pool_3x3",
            OpKind::MaxPool3x3 => "max_pool_3x3",
        }
    }

    /// Kernel size of the parameterized kinds.
    pub fn kernel_size(self) -> Option<usize> {
        match self {
            OpKind::Conv3x3 => Some(3),
            OpKind::Conv1x1 => Some(1),
            _ => None,
        }
    }

    pub fn has_params(self) -> bool {
        self.kernel_size().is_some()
    }

    /// Parameter shape for `channels -> channels`, if any.
    pub fn param_shape(self, channels: usize) -> Option<[usize; 4]> {
        self.kernel_size().map(|k| [channels, channels, k, k])
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown operation '{s}'")))
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

fn check_conv(input: &Tensor, weight: &Tensor) -> Result<([usize; 4], usize, usize)> {
    let [_, c_in, _, _] = input.dims4()?;
    let [c_out, w_in, kh, kw] = weight.dims4()?;
    if w_in != c_in || kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!(
            "conv weight {:?} incompatible with input {:?}",
            weight.shape(),
            input.shape()
        )));
    }
    Ok((input.dims4()?, c_out, kh))
}

/// Range of output coordinates `o` for which `o + offset` stays inside `0..n`.
#[inline]
fn valid_range(n: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset).min(n as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// Same-padded stride-1 cross-correlation, no activation.
pub fn conv2d(input: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let ([b, c_in, h, w], c_out, k) = check_conv(input, weight)?;
    let pad = (k / 2) as isize;
    let hw = h * w;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; b * c_out * hw];
    for bi in 0..b {
        for oc in 0..c_out {
            let out_plane = &mut out[(bi * c_out + oc) * hw..][..hw];
            for ic in 0..c_in {
                let in_plane = &x[(bi * c_in + ic) * hw..][..hw];
                let kernel = &wt[(oc * c_in + ic) * k * k..][..k * k];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y0, y1) = valid_range(h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x0, x1) = valid_range(w, dx);
                        let wv = kernel[ky * k + kx];
                        for y in y0..y1 {
                            let src = ((y as isize + dy) as usize) * w;
                            let dst = &mut out_plane[y * w + x0..y * w + x1];
                            let s = &in_plane
                                [(src as isize + x0 as isize + dx) as usize..][..x1 - x0];
                            for (o, i) in dst.iter_mut().zip(s) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, c_out, h, w], out)
}

/// Gradients of [`conv2d`] with respect to its input and weight.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    upstream: &Tensor,
    want_input_grad: bool,
    want_weight_grad: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let ([b, c_in, h, w], c_out, k) = check_conv(input, weight)?;
    if upstream.shape() != [b, c_out, h, w] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output [{b}, {c_out}, {h}, {w}]",
            upstream.shape()
        )));
    }
    let pad = (k / 2) as isize;
    let hw = h * w;
    let x = input.data();
    let wt = weight.data();
    let g = upstream.data();
    let mut dx = want_input_grad.then(|| vec![0.0; x.len()]);
    let mut dw = want_weight_grad.then(|| vec![0.0; wt.len()]);
    for bi in 0..b {
        for oc in 0..c_out {
            let g_plane = &g[(bi * c_out + oc) * hw..][..hw];
            for ic in 0..c_in {
                let in_off = (bi * c_in + ic) * hw;
                let k_off = (oc * c_in + ic) * k * k;
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y0, y1) = valid_range(h, dy);
                    for kx in 0..k {
                        let dxo = kx as isize - pad;
                        let (x0, x1) = valid_range(w, dxo);
                        let wv = wt[k_off + ky * k + kx];
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let src = in_off
                                + ((y as isize + dy) as usize) * w
                                + (x0 as isize + dxo) as usize;
                            let gs = &g_plane[y * w + x0..y * w + x1];
                            if want_weight_grad {
                                let xs = &x[src..src + (x1 - x0)];
                                acc += gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if let Some(dx) = dx.as_mut() {
                                for (d, gv) in dx[src..src + (x1 - x0)].iter_mut().zip(gs) {
                                    *d += wv * gv;
                                }
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            dw[k_off + ky * k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    let dx = dx.map(|d| Tensor::from_vec(input.shape(), d)).transpose()?;
    let dw = dw.map(|d| Tensor::from_vec(weight.shape(), d)).transpose()?;
    Ok((dx, dw))
}

fn avg_pool3(input: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = input.dims4()?;
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    let hw = h * w;
    for plane in 0..b * c {
        let p = &x[plane * hw..][..hw];
        let o = &mut out[plane * hw..][..hw];
        for y in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xq in xx.saturating_sub(1)..(xx + 2).min(w) {
                        s += p[yy * w + xq];
                    }
                }
                // padding counts as zeros: divisor is always the full window
                o[y * w + xx] = s / 9.0;
            }
        }
    }
    Tensor::from_vec(input.shape(), out)
}

fn avg_pool3_backward(upstream: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = upstream.dims4()?;
    let g = upstream.data();
    let mut dx = vec![0.0; g.len()];
    let hw = h * w;
    for plane in 0..b * c {
        let gp = &g[plane * hw..][..hw];
        let d = &mut dx[plane * hw..][..hw];
        for y in 0..h {
            for xx in 0..w {
                let gv = gp[y * w + xx] / 9.0;
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xq in xx.saturating_sub(1)..(xx + 2).min(w) {
                        d[yy * w + xq] += gv;
                    }
                }
            }
        }
    }
    Tensor::from_vec(upstream.shape(), dx)
}

/// Linear index of the window maximum; ties resolve to the lowest index.
#[inline]
fn window_argmax(p: &[f64], h: usize, w: usize, y: usize, x: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for yy in y.saturating_sub(1)..(y + 2).min(h) {
        for xq in x.saturating_sub(1)..(x + 2).min(w) {
            let v = p[yy * w + xq];
            if best == usize::MAX || v > best_v {
                best = yy * w + xq;
                best_v = v;
            }
        }
    }
    best
}

fn max_pool3(input: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = input.dims4()?;
    let x = input.data();
    let hw = h * w;
    let mut out = vec![0.0; x.len()];
    for plane in 0..b * c {
        let p = &x[plane * hw..][..hw];
        for y in 0..h {
            for xx in 0..w {
                out[plane * hw + y * w + xx] = p[window_argmax(p, h, w, y, xx)];
            }
        }
    }
    Tensor::from_vec(input.shape(), out)
}

fn max_pool3_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = input.dims4()?;
    let x = input.data();
    let g = upstream.data();
    let hw = h * w;
    let mut dx = vec![0.0; x.len()];
    for plane in 0..b * c {
        let p = &x[plane * hw..][..hw];
        for y in 0..h {
            for xx in 0..w {
                let src = window_argmax(p, h, w, y, xx);
                dx[plane * hw + src] += g[plane * hw + y * w + xx];
            }
        }
    }
    Tensor::from_vec(input.shape(), dx)
}

fn check_params(kind: OpKind, input: &Tensor, params: Option<&Tensor>) -> Result<()> {
    let [_, c, _, _] = input.dims4()?;
    match (kind.param_shape(c), params) {
        (Some(expected), Some(p)) if p.shape() == expected => Ok(()),
        (Some(expected), Some(p)) => Err(Error::Shape(format!(
            "{kind} expects parameters {expected:?}, got {:?}",
            p.shape()
        ))),
        (Some(expected), None) => Err(Error::Shape(format!(
            "{kind} requires parameters of shape {expected:?}"
        ))),
        (None, _) => Ok(()),
    }
}

/// Apply a candidate operation. Convolutions are ReLU followed by the conv.
pub fn op_forward(kind: OpKind, input: &Tensor, params: Option<&Tensor>) -> Result<Tensor> {
    check_params(kind, input, params)?;
    match kind {
        OpKind::Zero => Ok(Tensor::zeros(input.shape())),
        OpKind::SkipConnect => Ok(input.clone()),
        OpKind::Conv3x3 | OpKind::Conv1x1 => conv2d(&relu(input), params.expect("checked")),
        OpKind::AvgPool3x3 => avg_pool3(input),
        OpKind::MaxPool3x3 => max_pool3(input),
    }
}

/// Gradients of [`op_forward`]: `(input_grad, param_grad)`.
pub fn op_backward(
    kind: OpKind,
    input: &Tensor,
    params: Option<&Tensor>,
    upstream: &Tensor,
) -> Result<(Tensor, Option<Tensor>)> {
    op_backward_selective(kind, input, params, upstream, true)
}

/// Like [`op_backward`] but parameter gradients are only computed on request.
pub(crate) fn op_backward_selective(
    kind: OpKind,
    input: &Tensor,
    params: Option<&Tensor>,
    upstream: &Tensor,
    want_param_grad: bool,
) -> Result<(Tensor, Option<Tensor>)> {
    check_params(kind, input, params)?;
    if !input.same_shape(upstream) {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match input {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    match kind {
        OpKind::Zero => Ok((Tensor::zeros(input.shape()), None)),
        OpKind::SkipConnect => Ok((upstream.clone(), None)),
        OpKind::Conv3x3 | OpKind::Conv1x1 => {
            let weight = params.expect("checked");
            let activated = relu(input);
            let (d_act, d_w) =
                conv2d_backward(&activated, weight, upstream, true, want_param_grad)?;
            let mut d_in = d_act.expect("requested");
            for (d, x) in d_in.data_mut().iter_mut().zip(input.data()) {
                if *x <= 0.0 {
                    *d = 0.0;
                }
            }
            Ok((d_in, d_w))
        }
        OpKind::AvgPool3x3 => Ok((avg_pool3_backward(upstream)?, None)),
        OpKind::MaxPool3x3 => Ok((max_pool3_backward(input, upstream)?, None)),
    }
}

/// Spatial mean: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = input.dims4()?;
    let hw = h * w;
    let data = input
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().sum::<f64>() / hw as f64)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward(upstream: &Tensor, spatial: (usize, usize)) -> Result<Tensor> {
    let (h, w) = spatial;
    let [b, c] = match upstream.shape() {
        &[b, c] => [b, c],
        other => return Err(Error::Shape(format!("expected [B, C], got {other:?}"))),
    };
    let hw = h * w;
    let mut out = Vec::with_capacity(b * c * hw);
    for &g in upstream.data() {
        out.extend(std::iter::repeat(g / hw as f64).take(hw));
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

/// `logits[b, k] = sum_c weight[k, c] * x[b, c] + bias[k]`
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, c) = match x.shape() {
        &[b, c] => (b, c),
        other => return Err(Error::Shape(format!("expected [B, C], got {other:?}"))),
    };
    let k = bias.len();
    if weight.shape() != [k, c] {
        return Err(Error::Shape(format!(
            "linear weight {:?} incompatible with input {:?} and {k} outputs",
            weight.shape(),
            x.shape()
        )));
    }
    let mut out = vec![0.0; b * k];
    for bi in 0..b {
        let row = &x.data()[bi * c..][..c];
        for ki in 0..k {
            let wr = &weight.data()[ki * c..][..c];
            out[bi * k + ki] =
                bias.data()[ki] + wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::from_vec(&[b, k], out)
}

/// Returns `(input_grad, weight_grad, bias_grad)`.
pub fn linear_backward(
    x: &Tensor,
    weight: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, c) = match x.shape() {
        &[b, c] => (b, c),
        other => return Err(Error::Shape(format!("expected [B, C], got {other:?}"))),
    };
    let k = weight.shape()[0];
    if upstream.shape() != [b, k] {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match [{b}, {k}]",
            upstream.shape()
        )));
    }
    let mut dx = vec![0.0; b * c];
    let mut dw = vec![0.0; k * c];
    let mut db = vec![0.0; k];
    for bi in 0..b {
        let row = &x.data()[bi * c..][..c];
        for ki in 0..k {
            let g = upstream.data()[bi * k + ki];
            db[ki] += g;
            let wr = &weight.data()[ki * c..][..c];
            for ci in 0..c {
                dw[ki * c + ci] += g * row[ci];
                dx[bi * c + ci] += g * wr[ci];
            }
        }
    }
    Ok((
        Tensor::from_vec(&[b, c], dx)?,
        Tensor::from_vec(&[k, c], dw)?,
        Tensor::from_vec(&[k], db)?,
    ))
}
