//! Active-set non-negative least squares in normal-equation form.
//!
//! Minimises `½ xᵀQx − pᵀx` subject to `x ≥ 0`, with `Q` symmetric positive
//! semi-definite. This is the Lawson–Hanson active-set method working
//! directly on `Q = AᵀA` and `p = Aᵀb` (the Bro–de Jong formulation), which
//! is what block updates with a shared Gram matrix need.
//!
//! The optimality tolerance scales with `max |p|`, so the solution is
//! homogeneous of degree one in `p`.

use nalgebra::{DMatrix, DVector};

/// Solves the NNLS problem for one right-hand side. `q` is `n × n`
/// column-major, `p` has length `n`.
pub fn nnls_gram(q: &[f64], p: &[f64]) -> Vec<f64> {
    let n = p.len();
    debug_assert_eq!(q.len(), n * n);
    let p_max = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = vec![0.0; n];
    if p_max == 0.0 || p.iter().all(|&v| v <= 0.0) {
        return x;
    }
    let tol = 1e-12 * p_max * n as f64;
    let qij = |i: usize, j: usize| q[i + n * j];

    let gradient = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| p[i] - (0..n).map(|j| qij(i, j) * x[j]).sum::<f64>())
            .collect()
    };

    let mut passive = vec![false; n];
    let mut w = gradient(&x);
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap().then(b.cmp(&a)));
        let Some(j) = candidate else { break };
        passive[j] = true;

        let mut inner_guard = 0;
        loop {
            let s = solve_passive(q, p, &passive);
            if (0..n).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            // Step back to the boundary of the feasible region.
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                let denom = x[i] - s[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                } else {
                    alpha = 0.0;
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * (s[i] - x[i]);
                if passive[i] && x[i] <= 1e-15 * p_max.max(f64::MIN_POSITIVE) {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            inner_guard += 1;
            if inner_guard > n + 1 || !passive.iter().any(|&b| b) {
                break;
            }
        }
        w = gradient(&x);
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Unconstrained minimiser restricted to the passive set (zero elsewhere).
fn solve_passive(q: &[f64], p: &[f64], passive: &[bool]) -> Vec<f64> {
    let n = p.len();
    let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
    let k = idx.len();
    let qp = DMatrix::from_fn(k, k, |a, b| q[idx[a] + n * idx[b]]);
    let pp = DVector::from_fn(k, |a, _| p[idx[a]]);
    let sol = match qp.clone().cholesky() {
        Some(c) => c.solve(&pp),
        None => qp
            .svd(true, true)
            .solve(&pp, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(k)),
    };
    let mut out = vec![0.0; n];
    for (a, &i) in idx.iter().enumerate() {
        out[i] = sol[a];
    }
    out
}
