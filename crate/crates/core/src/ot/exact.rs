//! Exact optimal transport for small uniform instances.
//!
//! With uniform marginals and `n == m`, an optimal coupling is a scaled
//! permutation matrix (Birkhoff), so the problem reduces to linear
//! assignment. Two independent solvers are kept: exhaustive enumeration and
//! the O(n^3) Hungarian algorithm.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_ENUMERATION: usize = 8;
pub const MAX_EXACT: usize = 10;

/// Minimum-cost assignment by visiting every permutation.
pub fn assignment_by_enumeration(c: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let n = c.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    // Heap's algorithm, iterative form
    let mut counters = vec![0usize; n];
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>();
    let first = eval(&perm);
    if first < best.0 {
        best = (first, perm.clone());
    }
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let v = eval(&perm);
            if v < best.0 {
                best = (v, perm.clone());
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost assignment by the Hungarian algorithm with potentials.
pub fn hungarian(c: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let n = c.nrows();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
    (total, assignment)
}

/// Exact OT cost `(1/n) min_sigma sum_i C[i, sigma(i)]` for uniform `n x n`
/// instances with `n <= 10`.
pub fn exact_ot_small(c: &DMatrix<f64>, a: &[f64], b: &[f64]) -> Result<f64> {
    let (n, m) = c.shape();
    if n != m || a.len() != n || b.len() != m {
        return Err(Error::Unsupported(format!(
            "exact solver needs a square instance, got {n}x{m} with marginals {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n == 0 || n > MAX_EXACT {
        return Err(Error::Unsupported(format!(
            "exact solver supports 1..={MAX_EXACT} points, got {n}"
        )));
    }
    let u = 1.0 / n as f64;
    if a.iter().chain(b).any(|w| (w - u).abs() > 1e-12) {
        return Err(Error::Unsupported(
            "exact solver needs uniform marginals".into(),
        ));
    }
    let total = if n <= MAX_ENUMERATION {
        assignment_by_enumeration(c).0
    } else {
        hungarian(c).0
    };
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn two_by_two_cases() {
        let u = uniform(2);
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(exact_ot_small(&c, &u, &u).unwrap(), 0.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(exact_ot_small(&c, &u, &u).unwrap(), 0.0);
        let c = DMatrix::from_element(2, 2, 2.0);
        assert_eq!(exact_ot_small(&c, &u, &u).unwrap(), 2.0);
    }

    #[test]
    fn unsupported_instances() {
        let c = DMatrix::zeros(2, 3);
        assert!(matches!(
            exact_ot_small(&c, &uniform(2), &uniform(3)),
            Err(Error::Unsupported(_))
        ));
        let c = DMatrix::zeros(2, 2);
        assert!(matches!(
            exact_ot_small(&c, &[0.3, 0.7], &uniform(2)),
            Err(Error::Unsupported(_))
        ));
        let c = DMatrix::zeros(11, 11);
        assert!(exact_ot_small(&c, &uniform(11), &uniform(11)).is_err());
    }

    #[test]
    fn hungarian_handles_ten_points() {
        let mut rng = seed::rng(10);
        let c = DMatrix::from_fn(10, 10, |_, _| rng.random_range(0.0..1.0));
        let (cost, perm) = hungarian(&c);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        // no single swap improves the assignment
        for i in 0..10 {
            for k in i + 1..10 {
                let mut p = perm.clone();
                p.swap(i, k);
                let alt: f64 = p.iter().enumerate().map(|(r, &j)| c[(r, j)]).sum();
                assert!(alt >= cost - 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn enumeration_agrees_with_hungarian(seed in any::<u64>(), n in 1usize..=MAX_ENUMERATION) {
            let mut rng = seed::rng(seed);
            let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..10.0));
            let (e, _) = assignment_by_enumeration(&c);
            let (h, _) = hungarian(&c);
            prop_assert!((e - h).abs() <= 1e-9 * e.abs().max(1.0));
        }
    }
}
