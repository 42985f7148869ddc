//! Small dense/sparse kernels shared by the solvers.
//!
//! Every inner product here is weighted: nodal vectors live in a discrete
//! `L^2` space whose Gram matrix is the diagonal of quadrature weights.
//! Operators that are symmetric with respect to that inner product (but not
//! as plain matrices, e.g. Neumann Laplacians with halved boundary weights)
//! can therefore be handled by ordinary conjugate gradients.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// `sum_i w_i a_i b_i`.
pub fn weighted_dot(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

pub fn weighted_norm(weights: &[f64], a: &[f64]) -> f64 {
    weighted_dot(weights, a, a).max(0.0).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).find(|&(c, _)| c == r).map_or(0.0, |(_, v)| v))
            .collect()
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Weighted norm of the true final residual `b - A x`.
    pub residual: f64,
    /// Weighted norm of `b`.
    pub rhs_norm: f64,
}

impl CgOutcome {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual / self.rhs_norm
        } else {
            self.residual
        }
    }
}

/// Conjugate gradients for `A x = b` with `A` self-adjoint and positive
/// definite in the `weights` inner product. `x` holds the initial guess on
/// entry and the iterate on exit.
///
/// Iterates until the true residual drops to `target` (absolute, weighted
/// norm), `max_iter` is reached or restarts stop reducing the true residual.
/// Only a breakdown (non-positive curvature) is an error; whether the final
/// residual is acceptable is the caller's decision.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    weights: &[f64],
    target: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    if x.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x.len().min(weights.len()),
        });
    }
    let rhs_norm = weighted_norm(weights, b);
    let mut ax = vec![0.0; n];
    let true_residual = |x: &[f64], ax: &mut [f64], r: &mut [f64]| {
        apply(x, ax);
        for ((ri, bi), ai) in r.iter_mut().zip(b).zip(ax.iter()) {
            *ri = bi - ai;
        }
        weighted_norm(weights, r)
    };
    let mut r = vec![0.0; n];
    let mut residual = true_residual(x, &mut ax, &mut r);
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while residual > target && iterations < max_iter {
        p.copy_from_slice(&r);
        let mut rr = residual * residual;
        while rr.sqrt() > target && iterations < max_iter {
            apply(&p, &mut ap);
            let pap = weighted_dot(weights, &p, &ap);
            if !(pap > 0.0) || !pap.is_finite() {
                if rr == 0.0 {
                    break;
                }
                return Err(Error::LinearSolve {
                    iterations,
                    residual: rr.sqrt(),
                });
            }
            let alpha = rr / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            let rr_new = weighted_dot(weights, &r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            iterations += 1;
        }
        // restart from the true residual; stop once restarts stagnate
        let previous = residual;
        residual = true_residual(x, &mut ax, &mut r);
        if residual > 0.5 * previous {
            break;
        }
    }
    Ok(CgOutcome {
        iterations,
        residual,
        rhs_norm,
    })
}

/// Extreme Ritz values of an operator self-adjoint in the `weights` inner
/// product, from `steps` Lanczos iterations with full reorthogonalization
/// started at `start`. Returns `(smallest, largest)`.
pub fn lanczos_extremes<F>(apply: F, weights: &[f64], start: &[f64], steps: usize) -> (f64, f64)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = start.len();
    let steps = steps.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let nrm = weighted_norm(weights, start);
    let mut q: Vec<f64> = if nrm > 0.0 {
        start.iter().map(|v| v / nrm).collect()
    } else {
        let c = 1.0 / weights.iter().sum::<f64>().sqrt();
        vec![c; n]
    };
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut w = vec![0.0; n];
    for k in 0..steps {
        apply(&q, &mut w);
        let alpha = weighted_dot(weights, &q, &w);
        alphas.push(alpha);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = weighted_dot(weights, b, &w);
                axpy(-c, b, &mut w);
            }
        }
        let beta = weighted_norm(weights, &w);
        if k + 1 == steps || beta <= 1e-13 * alpha.abs().max(1.0) {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Five-point Gauss-Legendre rule on `[-1, 1]`.
pub const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (-0.906_179_845_938_663_9, 0.236_926_885_056_189_08),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.906_179_845_938_663_9, 0.236_926_885_056_189_08),
];

/// `int_a^b g(t) dt` by five-point Gauss-Legendre.
pub fn gauss_legendre_5<G: FnMut(f64) -> f64>(a: f64, b: f64, mut g: G) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GAUSS_LEGENDRE_5
        .iter()
        .map(|&(x, w)| w * g(mid + half * x))
        .sum::<f64>()
        * half
}
