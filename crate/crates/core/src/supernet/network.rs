//! Forward and backward passes through stem, cells and head.
//!
//! A pass is parameterized by per-edge mixing weights (flattened
//! `[edges x ops]`): softmax rows for the supernet, one-hot rows for a
//! discretized network. Ops with mixing weight exactly 0 are skipped.

use super::state::SupernetState;
use crate::diffcore::ops::op_backward_selective;
use crate::diffcore::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward,
    op_forward, OpKind, Parameter, Tensor,
};
use crate::error::{Error, Result};

pub(crate) struct CellCache {
    nodes: Vec<Tensor>,
    /// `op_outputs[edge][op]`, kept only when logit gradients are wanted.
    op_outputs: Vec<Vec<Option<Tensor>>>,
}

pub(crate) struct ForwardCache {
    /// `states[0]` is the stem output, `states[c + 1]` the output of cell `c`.
    states: Vec<Tensor>,
    cells: Vec<CellCache>,
    pooled: Tensor,
}

/// Softmax-weighted sum of every corpus op applied to one edge input.
///
/// `params[o]` must hold the weight of op `o` when that op is a convolution.
pub fn mixed_forward(
    corpus: &[OpKind],
    input: &Tensor,
    alpha_row: &[f64],
    params: &[Option<Parameter>],
) -> Result<Tensor> {
    if alpha_row.len() != corpus.len() || params.len() != corpus.len() {
        return Err(Error::Shape(format!(
            "corpus of {} ops with {} logits and {} parameter slots",
            corpus.len(),
            alpha_row.len(),
            params.len()
        )));
    }
    let weights = crate::diffcore::softmax(alpha_row);
    let mut out = Tensor::zeros(input.shape());
    for ((&op, w), p) in corpus.iter().zip(&weights).zip(params) {
        if op == OpKind::Zero {
            continue;
        }
        let y = op_forward(op, input, p.as_ref().map(|p| &p.value))?;
        out.add_scaled(&y, *w);
    }
    Ok(out)
}

fn mean_of(nodes: &[Tensor]) -> Tensor {
    let mut out = Tensor::zeros(nodes[0].shape());
    for n in nodes {
        out.add_scaled(n, 1.0);
    }
    out.scale(1.0 / nodes.len() as f64);
    out
}

impl SupernetState {
    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [_, c, h, w] = x.dims4()?;
        if [c, h, w] != self.config.image_shape {
            return Err(Error::Shape(format!(
                "input images are {:?}, search space expects {:?}",
                [c, h, w],
                self.config.image_shape
            )));
        }
        Ok(())
    }

    fn cell_forward(
        &self,
        cell: usize,
        s0: &Tensor,
        s1: &Tensor,
        mix: &[f64],
        keep_ops: bool,
    ) -> Result<(Tensor, CellCache)> {
        let cfg = &self.config;
        let n_ops = cfg.num_ops();
        let mut nodes = vec![s0.clone(), s1.clone()];
        let mut op_outputs = vec![vec![None; n_ops]; cfg.num_edges()];
        for to in 2..cfg.nodes_per_cell + 2 {
            let mut acc = Tensor::zeros(s0.shape());
            for from in 0..to {
                let e = cfg.edge_index(from, to);
                for (o, &op) in cfg.op_corpus.iter().enumerate() {
                    let w = mix[e * n_ops + o];
                    if w == 0.0 || op == OpKind::Zero {
                        continue;
                    }
                    let params = self.cells[cell][e][o].as_ref().map(|p| &p.value);
                    let y = op_forward(op, &nodes[from], params)?;
                    acc.add_scaled(&y, w);
                    if keep_ops {
                        op_outputs[e][o] = Some(y);
                    }
                }
            }
            nodes.push(acc);
        }
        let out = mean_of(&nodes[2..]);
        Ok((out, CellCache { nodes, op_outputs }))
    }

    /// Logits for a batch. With `keep_ops` the cache also retains every op
    /// output, which the logit gradient needs.
    pub(crate) fn forward(
        &self,
        x: &Tensor,
        mix: &[f64],
        keep_ops: bool,
    ) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let mut states = vec![conv2d(x, &self.stem.value)?];
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in 0..self.cells.len() {
            let (out, cache) = self.cell_forward(
                c,
                &states[c.saturating_sub(1)],
                &states[c],
                mix,
                keep_ops,
            )?;
            states.push(out);
            cells.push(cache);
        }
        let pooled = global_avg_pool(states.last().expect("stem"))?;
        let logits = linear(&pooled, &self.head_w.value, &self.head_b.value)?;
        Ok((logits, ForwardCache { states, cells, pooled }))
    }

    /// Logits only; no cache is kept.
    pub fn logits(&self, x: &Tensor, mix: &[f64]) -> Result<Tensor> {
        self.check_input(x)?;
        let mut prev = conv2d(x, &self.stem.value)?;
        let mut prev_prev = prev.clone();
        for c in 0..self.cells.len() {
            let (out, _) = self.cell_forward(c, &prev_prev, &prev, mix, false)?;
            prev_prev = std::mem::replace(&mut prev, out);
        }
        let pooled = global_avg_pool(&prev)?;
        linear(&pooled, &self.head_w.value, &self.head_b.value)
    }

    fn cell_backward(
        &mut self,
        cell: usize,
        cache: &CellCache,
        d_out: &Tensor,
        mix: &[f64],
        want_weights: bool,
        mut mix_grad: Option<&mut [f64]>,
    ) -> Result<(Tensor, Tensor)> {
        let n = self.config.nodes_per_cell;
        let n_ops = self.config.num_ops();
        let corpus = self.config.op_corpus.clone();
        let mut d_nodes: Vec<Tensor> = (0..n + 2).map(|_| Tensor::zeros(d_out.shape())).collect();
        for d in &mut d_nodes[2..] {
            d.add_scaled(d_out, 1.0 / n as f64);
        }
        for to in (2..n + 2).rev() {
            let (lower, upper) = d_nodes.split_at_mut(to);
            let d_to = &upper[0];
            for from in 0..to {
                let e = self.config.edge_index(from, to);
                for (o, &op) in corpus.iter().enumerate() {
                    let w = mix[e * n_ops + o];
                    if w == 0.0 || op == OpKind::Zero {
                        continue;
                    }
                    if let Some(g) = mix_grad.as_deref_mut() {
                        let y = cache.op_outputs[e][o].as_ref().ok_or_else(|| {
                            Error::Contract("op outputs were not kept in the forward pass".into())
                        })?;
                        g[e * n_ops + o] += d_to.dot(y);
                    }
                    if op == OpKind::SkipConnect {
                        lower[from].add_scaled(d_to, w);
                        continue;
                    }
                    let param = self.cells[cell][e][o].as_mut();
                    let (d_in, d_param) = op_backward_selective(
                        op,
                        &cache.nodes[from],
                        param.as_ref().map(|p| &p.value),
                        d_to,
                        want_weights && op.has_params(),
                    )?;
                    lower[from].add_scaled(&d_in, w);
                    if let (Some(p), Some(dp)) = (param, d_param) {
                        p.grad.add_scaled(&dp, w);
                    }
                }
            }
        }
        let d1 = d_nodes.swap_remove(1);
        let d0 = d_nodes.swap_remove(0);
        Ok((d0, d1))
    }

    /// Backpropagate `d_logits`. Weight gradients are accumulated into the
    /// parameters when `want_weights`; the gradient with respect to the
    /// mixing weights is returned when `want_mix` (requires `keep_ops`).
    pub(crate) fn backward(
        &mut self,
        x: &Tensor,
        cache: &ForwardCache,
        d_logits: &Tensor,
        mix: &[f64],
        want_weights: bool,
        want_mix: bool,
    ) -> Result<Option<Vec<f64>>> {
        let (d_pooled, d_hw, d_hb) = linear_backward(&cache.pooled, &self.head_w.value, d_logits)?;
        if want_weights {
            self.head_w.grad.add_scaled(&d_hw, 1.0);
            self.head_b.grad.add_scaled(&d_hb, 1.0);
        }
        let last = cache.states.last().expect("stem");
        let [_, _, h, w] = last.dims4()?;
        let mut d_states: Vec<Tensor> =
            cache.states.iter().map(|s| Tensor::zeros(s.shape())).collect();
        let n_states = d_states.len();
        d_states[n_states - 1] = global_avg_pool_backward(&d_pooled, (h, w))?;

        let mut mix_grad = want_mix.then(|| vec![0.0; mix.len()]);
        for c in (0..self.cells.len()).rev() {
            let d_out = std::mem::replace(&mut d_states[c + 1], Tensor::zeros(&[0]));
            let (d0, d1) = self.cell_backward(
                c,
                &cache.cells[c],
                &d_out,
                mix,
                want_weights,
                mix_grad.as_deref_mut(),
            )?;
            d_states[c.saturating_sub(1)].add_scaled(&d0, 1.0);
            d_states[c].add_scaled(&d1, 1.0);
        }
        if want_weights {
            let (_, d_stem) = conv2d_backward(x, &self.stem.value, &d_states[0], false, true)?;
            self.stem.grad.add_scaled(&d_stem.expect("requested"), 1.0);
        }
        Ok(mix_grad)
    }
}

/// Chain rule through a row-wise softmax: `w * (g - <w, g>)` per row.
pub(crate) fn softmax_backward(weights: &[f64], grad: &[f64], n_ops: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len());
    for (w, g) in weights.chunks_exact(n_ops).zip(grad.chunks_exact(n_ops)) {
        let inner: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
        out.extend(w.iter().zip(g).map(|(a, b)| a * (b - inner)));
    }
    out
}
