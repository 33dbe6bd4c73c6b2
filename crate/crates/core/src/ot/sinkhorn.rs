//! Entropic optimal transport by log-domain Sinkhorn iterations.
//!
//! Potentials `f`, `g` are updated in the log domain so that small
//! regularization strengths do not underflow the Gibbs kernel. The plan is
//! `P_ij = a_i b_j exp((f_i + g_j - C_ij) / eps)`. Small `eps` is reached by
//! halving from `max C` with warm-started potentials.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A solved transport problem.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportResult {
    pub plan: DMatrix<f64>,
    /// `<C, P>`; the entropy term is not included.
    pub transport_cost: f64,
    pub iterations: usize,
    /// Largest L1 violation among the row and column marginals.
    pub marginal_error: f64,
    pub converged: bool,
    pub epsilon: f64,
}

pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_TOL: f64 = 1e-9;
const SIMPLEX_TOL: f64 = 1e-12;
/// Marginal tolerance of the intermediate annealing stages.
const STAGE_TOL: f64 = 1e-6;

pub(crate) fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Precondition(format!("{name} is empty")));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Precondition(format!(
            "{name} has negative or non-finite entries"
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL * (w.len() as f64).max(1.0) {
        return Err(Error::Precondition(format!(
            "{name} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Row-major copy of `C / eps`.
fn scaled_rows(c: &DMatrix<f64>, eps: f64) -> Vec<f64> {
    let (n, m) = c.shape();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            out.push(c[(i, j)] / eps);
        }
    }
    out
}

/// `out_i = -eps * LSE_j(log_w_j + pot_j/eps - cost_ij)` with `cost` row-major `n x m`.
fn softmin_update(cost: &[f64], m: usize, log_w: &[f64], pot: &[f64], eps: f64, out: &mut [f64]) {
    let shifted: Vec<f64> = log_w.iter().zip(pot).map(|(lw, p)| lw + p / eps).collect();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &cost[i * m..][..m];
        let mut max = f64::NEG_INFINITY;
        for (s, c) in shifted.iter().zip(row) {
            max = max.max(s - c);
        }
        if max == f64::NEG_INFINITY {
            *o = f64::INFINITY;
            continue;
        }
        let sum: f64 = shifted.iter().zip(row).map(|(s, c)| (s - c - max).exp()).sum();
        *o = -eps * (max + sum.ln());
    }
}

fn canonical_is_transposed(c: &DMatrix<f64>, a: &[f64], b: &[f64]) -> bool {
    let (n, m) = c.shape();
    if n != m {
        return n > m;
    }
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Less => return false,
            Ordering::Greater => return true,
            Ordering::Equal => {}
        }
    }
    for i in 0..n {
        for j in 0..m {
            match c[(i, j)].total_cmp(&c[(j, i)]) {
                Ordering::Less => return false,
                Ordering::Greater => return true,
                Ordering::Equal => {}
            }
        }
    }
    false
}

/// Solve `min <C, P> + eps * sum P log P` subject to marginals `a`, `b`.
///
/// Iterates until the marginal L1 error drops to `tol` or `max_iter` is
/// reached; [`TransportResult::converged`] records which. The problem is
/// solved in a canonical orientation so that `sinkhorn(C^T, b, a)` returns
/// exactly the transposed plan.
pub fn sinkhorn(
    c: &DMatrix<f64>,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportResult> {
    let (n, m) = c.shape();
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if a.len() != n || b.len() != m {
        return Err(Error::Shape(format!(
            "cost matrix is {n}x{m} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_simplex("a", a)?;
    check_simplex("b", b)?;
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Precondition(
            "cost matrix must be finite and nonnegative".into(),
        ));
    }
    if canonical_is_transposed(c, a, b) {
        let mut r = solve(&c.transpose(), b, a, epsilon, max_iter, tol)?;
        r.plan = r.plan.transpose();
        Ok(r)
    } else {
        solve(c, a, b, epsilon, max_iter, tol)
    }
}

/// Regularization schedule: halve from the largest cost down to `eps`.
fn epsilon_schedule(c: &DMatrix<f64>, eps: f64) -> Vec<f64> {
    let mut stages = Vec::new();
    let mut e = c.max();
    while e > 2.0 * eps {
        stages.push(e);
        e *= 0.5;
    }
    stages.push(eps);
    stages
}

fn solve(
    c: &DMatrix<f64>,
    a: &[f64],
    b: &[f64],
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportResult> {
    let (n, m) = c.shape();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut f_next = vec![0.0; n];
    let mut iterations = 0;
    let mut rows = Vec::new();

    // Warm-started annealing: potentials from a larger eps seed the next
    // stage, which skips the slow early phase at small eps.
    let stages = epsilon_schedule(c, eps);
    let last = stages.len() - 1;
    for (k, &stage_eps) in stages.iter().enumerate() {
        let final_stage = k == last;
        // half of tol leaves room for rounding in the plan-based check
        let stage_tol = if final_stage { 0.5 * tol } else { tol.max(STAGE_TOL) };
        rows = scaled_rows(c, stage_eps);
        let cols = scaled_rows(&c.transpose(), stage_eps);
        softmin_update(&rows, m, &log_b, &g, stage_eps, &mut f);
        while iterations < max_iter {
            iterations += 1;
            softmin_update(&cols, n, &log_a, &f, stage_eps, &mut g);
            // The next row update measures the current row-marginal violation:
            // row_i(P) = a_i exp((f_i - f_next_i) / eps). Columns are exact after
            // the g update.
            softmin_update(&rows, m, &log_b, &g, stage_eps, &mut f_next);
            if f_next.iter().chain(&g).any(|v| v.is_nan()) {
                return Err(Error::Numerical(format!(
                    "NaN in Sinkhorn potentials at iteration {iterations}"
                )));
            }
            let row_err: f64 = a
                .iter()
                .zip(f.iter().zip(&f_next))
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, (fo, fnew))| (w * ((fo - fnew) / stage_eps).exp() - w).abs())
                .sum();
            if row_err <= stage_tol {
                break;
            }
            std::mem::swap(&mut f, &mut f_next);
        }
        if !final_stage && iterations >= max_iter {
            // out of budget: finish with the target eps from here
            let cols = scaled_rows(&c.transpose(), eps);
            rows = scaled_rows(c, eps);
            softmin_update(&cols, n, &log_a, &f, eps, &mut g);
            break;
        }
    }

    let mut plan = DMatrix::zeros(n, m);
    let mut cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = if a[i] > 0.0 && b[j] > 0.0 {
                (log_a[i] + log_b[j] + (f[i] + g[j]) / eps - rows[i * m + j]).exp()
            } else {
                0.0
            };
            if !p.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite plan entry after {iterations} iterations"
                )));
            }
            plan[(i, j)] = p;
            cost += c[(i, j)] * p;
        }
    }
    let marginal_error = marginal_error(&plan, a, b);
    Ok(TransportResult {
        plan,
        transport_cost: cost,
        iterations,
        marginal_error,
        converged: marginal_error <= tol,
        epsilon: eps,
    })
}

/// `max(|P 1 - a|_1, |P^T 1 - b|_1)`
pub fn marginal_error(plan: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let row: f64 = plan
        .row_iter()
        .zip(a)
        .map(|(r, w)| (r.sum() - w).abs())
        .sum();
    let col: f64 = plan
        .column_iter()
        .zip(b)
        .map(|(c, w)| (c.sum() - w).abs())
        .sum();
    row.max(col)
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
