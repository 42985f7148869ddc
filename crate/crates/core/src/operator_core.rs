//! Discrete linear operators, the scalar monotone nonlinearity with its
//! Yosida regularization, and the Lipschitz perturbation.
//!
//! Operator square-root norms `|A^{1/2} w|` are always evaluated as
//! `sqrt((A w, w))`; no matrix roots are ever formed.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{lanczos_extremes, weighted_dot, weighted_norm, CsrMatrix};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative tolerance below which a negative quadratic form is treated as
/// rounding noise.
pub const FORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Identity,
    Zero,
    Matrix(CsrMatrix),
}

/// A linear operator on nodal vectors that is symmetric and positive
/// semidefinite with respect to the weighted inner product `(a, b)_H =
/// sum_i w_i a_i b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperatorSpec {
    name: String,
    weights: Vec<f64>,
    action: Action,
    /// Smallest Ritz value estimate, diagnostic only.
    pub coercivity_floor: Option<f64>,
    /// Operator norm estimate.
    pub bound: Option<f64>,
}

impl LinearOperatorSpec {
    pub fn identity(weights: Vec<f64>) -> Self {
        LinearOperatorSpec {
            name: "identity".into(),
            weights,
            action: Action::Identity,
            coercivity_floor: Some(1.0),
            bound: Some(1.0),
        }
    }

    pub fn zero(weights: Vec<f64>) -> Self {
        LinearOperatorSpec {
            name: "zero".into(),
            weights,
            action: Action::Zero,
            coercivity_floor: Some(0.0),
            bound: Some(0.0),
        }
    }

    pub fn from_matrix(name: impl Into<String>, matrix: CsrMatrix, weights: Vec<f64>) -> Result<Self> {
        if matrix.nrows() != weights.len() || matrix.ncols() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                actual: matrix.nrows(),
            });
        }
        let bound = matrix.gershgorin_bound();
        Ok(LinearOperatorSpec {
            name: name.into(),
            weights,
            action: Action::Matrix(matrix),
            coercivity_floor: None,
            bound: Some(bound),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.action, Action::Identity)
    }

    pub fn matrix(&self) -> Option<&CsrMatrix> {
        match &self.action {
            Action::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// Unchecked action; `w` and `out` must have length `dim`.
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        match &self.action {
            Action::Identity => out.copy_from_slice(w),
            Action::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Action::Matrix(m) => m.mul_into(w, out),
        }
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let mut out = vec![0.0; w.len()];
        self.apply_into(w, &mut out);
        Ok(out)
    }

    pub fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_dot(&self.weights, a, b)
    }

    pub fn h_norm(&self, w: &[f64]) -> f64 {
        weighted_norm(&self.weights, w)
    }

    /// `(A w, w)_H`, unchecked for sign.
    pub fn form(&self, w: &[f64]) -> Result<f64> {
        let aw = self.apply(w)?;
        Ok(self.inner(&aw, w))
    }

    /// `|A^{1/2} w|_H = sqrt((A w, w)_H)`.
    pub fn bilinear_norm(&self, w: &[f64]) -> Result<f64> {
        let value = self.form(w)?;
        let norm_sq = self.inner(w, w);
        let scale = 1.0 + self.bound.unwrap_or(1.0);
        if value < -FORM_TOLERANCE * scale * norm_sq {
            return Err(Error::NotMonotone { value, norm_sq });
        }
        Ok(value.max(0.0).sqrt())
    }

    /// Extreme Ritz values `(smallest, largest)` from a Lanczos run of
    /// `steps` iterations started at a seeded random vector.
    pub fn ritz_extremes(&self, steps: usize, seed: u64) -> (f64, f64) {
        let start = random_vectors(self.dim(), 1, seed).remove(0);
        lanczos_extremes(|u, v| self.apply_into(u, v), &self.weights, &start, steps)
    }

    /// Fills `coercivity_floor` with the smallest Ritz value.
    pub fn with_coercivity_estimate(mut self, steps: usize, seed: u64) -> Self {
        if let Action::Matrix(_) = self.action {
            let (lo, _) = self.ritz_extremes(steps, seed);
            self.coercivity_floor = Some(lo);
        }
        self
    }

    /// Worst symmetry gap and most negative normalized form over `samples`.
    pub fn check_symmetry_and_monotonicity(&self, samples: &[Vec<f64>]) -> Result<OperatorCheck> {
        let mut images = Vec::with_capacity(samples.len());
        for s in samples {
            images.push(self.apply(s)?);
        }
        let scale = self.bound.unwrap_or(1.0).max(1.0);
        let mut max_symmetry_gap: f64 = 0.0;
        let mut min_form: f64 = f64::INFINITY;
        for (i, (w, aw)) in samples.iter().zip(&images).enumerate() {
            let nw = self.h_norm(w);
            if nw > 0.0 {
                min_form = min_form.min(self.inner(aw, w) / (scale * nw * nw));
            }
            // pair each sample with its successor
            let j = (i + 1) % samples.len();
            let (z, az) = (&samples[j], &images[j]);
            let nz = self.h_norm(z);
            if nw > 0.0 && nz > 0.0 {
                let gap = (self.inner(aw, z) - self.inner(az, w)).abs() / (scale * nw * nz);
                max_symmetry_gap = max_symmetry_gap.max(gap);
            }
        }
        if !min_form.is_finite() {
            min_form = 0.0;
        }
        Ok(OperatorCheck {
            max_symmetry_gap,
            min_normalized_form: min_form,
        })
    }

    /// `min (L w, w) / |w|^2` over samples, compared against `c_l`.
    pub fn check_inertia(&self, c_l: f64, samples: &[Vec<f64>]) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for s in samples {
            let n2 = self.inner(s, s);
            if n2 > 0.0 {
                worst = worst.min(self.form(s)? / n2);
            }
        }
        if worst < c_l * (1.0 - 1e-12) {
            return Err(Error::hypothesis(
                Hypothesis::InertiaCoercive,
                format!("(Lw, w)/|w|^2 = {worst} below c_L = {c_l}"),
            ));
        }
        Ok(worst)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        match &self.action {
            Action::Identity => (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            Action::Zero => vec![vec![0.0; n]; n],
            Action::Matrix(m) => m.to_dense(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCheck {
    /// `max |(Aw, z) - (Az, w)| / (|A| |w| |z|)`.
    pub max_symmetry_gap: f64,
    /// `min (Aw, w) / (|A| |w|^2)`.
    pub min_normalized_form: f64,
}

impl OperatorCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_symmetry_gap <= rel_tol && self.min_normalized_form >= -rel_tol
    }
}

/// Seeded standard-normal-ish sample vectors (uniform on `[-1, 1]`).
pub fn random_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingCompatibilityReport {
    /// `min (Bw, A2 w) / (|Bw| |A2 w|)`; nonnegativity requires `>= -tol`.
    pub worst_positivity: f64,
    /// `max |(Bw, A2 z) - (Bz, A2 w)| / (|Bw| |A2 z| + |Bz| |A2 w|)`.
    pub worst_cross_symmetry: f64,
    pub passed: bool,
}

/// Checks `(Bw, A2 w) >= 0` and `(Bw, A2 z) = (Bz, A2 w)` on samples, both
/// relative to `1e-10`.
pub fn check_damping_compatibility(
    b: &LinearOperatorSpec,
    a2: &LinearOperatorSpec,
    samples: &[Vec<f64>],
) -> Result<DampingCompatibilityReport> {
    if b.dim() != a2.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            actual: a2.dim(),
        });
    }
    let mut bw = Vec::with_capacity(samples.len());
    let mut aw = Vec::with_capacity(samples.len());
    for s in samples {
        bw.push(b.apply(s)?);
        aw.push(a2.apply(s)?);
    }
    let mut worst_positivity: f64 = 0.0;
    let mut worst_cross_symmetry: f64 = 0.0;
    for i in 0..samples.len() {
        let denom = b.h_norm(&bw[i]) * b.h_norm(&aw[i]);
        if denom > 0.0 {
            worst_positivity = worst_positivity.min(b.inner(&bw[i], &aw[i]) / denom);
        }
        let j = (i + 1) % samples.len();
        let lhs = b.inner(&bw[i], &aw[j]);
        let rhs = b.inner(&bw[j], &aw[i]);
        let denom = b.h_norm(&bw[i]) * b.h_norm(&aw[j]) + b.h_norm(&bw[j]) * b.h_norm(&aw[i]);
        if denom > 0.0 {
            worst_cross_symmetry = worst_cross_symmetry.max((lhs - rhs).abs() / denom);
        }
    }
    let passed = worst_positivity >= -1e-10 && worst_cross_symmetry <= 1e-10;
    Ok(DampingCompatibilityReport {
        worst_positivity,
        worst_cross_symmetry,
        passed,
    })
}

/// Single-valued maximal monotone `beta = beta_hat'` with convex primitive
/// `beta_hat >= 0`, `beta_hat(0) = 0`.
#[derive(Clone)]
pub struct NonlinearPotential {
    name: String,
    beta: ScalarFn,
    beta_prime: ScalarFn,
    beta_hat: ScalarFn,
    /// `C_beta` in `|beta''(r)| <= C_beta (1 + |r|)`.
    pub growth_constant: f64,
    /// `(p, q)` of the local Lipschitz bound of the induced Nemytskii map.
    pub lipschitz_exponents: (f64, f64),
    /// `C_Phi`; domain dependent, so generally unknown.
    pub phi_lipschitz: Option<f64>,
}

impl fmt::Debug for NonlinearPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearPotential")
            .field("name", &self.name)
            .field("growth_constant", &self.growth_constant)
            .field("lipschitz_exponents", &self.lipschitz_exponents)
            .finish()
    }
}

impl NonlinearPotential {
    pub fn from_fns(
        name: impl Into<String>,
        beta: ScalarFn,
        beta_prime: ScalarFn,
        beta_hat: ScalarFn,
        growth_constant: f64,
    ) -> Self {
        NonlinearPotential {
            name: name.into(),
            beta,
            beta_prime,
            beta_hat,
            growth_constant,
            lipschitz_exponents: (2.0, 2.0),
            phi_lipschitz: None,
        }
    }

    pub fn zero() -> Self {
        Self::polynomial(&[0.0]).expect("zero polynomial is valid")
    }

    /// `beta(r) = c r`.
    pub fn linear(c: f64) -> Self {
        Self::polynomial(&[0.0, c]).expect("linear polynomial is valid")
    }

    /// `beta(r) = d1 r^3`.
    pub fn cubic(d1: f64) -> Self {
        let mut p = Self::polynomial(&[0.0, 0.0, 0.0, d1]).expect("cubic polynomial is valid");
        p.name = format!("cubic(d1={d1})");
        p
    }

    /// `beta(r) = sum_k c_k r^k`; degree at most 3 so that `beta''` grows at
    /// most linearly. Monotonicity is not checked here.
    pub fn polynomial(coefficients: &[f64]) -> Result<Self> {
        let mut coeffs = coefficients.to_vec();
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() > 4 {
            return Err(Error::hypothesis(
                Hypothesis::BetaGrowth,
                format!("polynomial beta of degree {} has superlinear beta''", coeffs.len() - 1),
            ));
        }
        if coeffs[0] != 0.0 {
            return Err(Error::hypothesis(
                Hypothesis::BetaMonotone,
                format!("beta(0) = {} but the primitive must vanish with zero slope at 0", coeffs[0]),
            ));
        }
        let c = coeffs.clone();
        let beta: ScalarFn = Arc::new(move |r| c.iter().rev().fold(0.0, |acc, ck| acc * r + ck));
        let dc: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, ck)| k as f64 * ck).collect();
        let beta_prime: ScalarFn = Arc::new(move |r| dc.iter().rev().fold(0.0, |acc, ck| acc * r + ck));
        let mut ic = vec![0.0];
        ic.extend(coeffs.iter().enumerate().map(|(k, ck)| ck / (k as f64 + 1.0)));
        let beta_hat: ScalarFn = Arc::new(move |r| ic.iter().rev().fold(0.0, |acc, ck| acc * r + ck));
        // beta'' = 2 c2 + 6 c3 r, so |beta''| <= max(2|c2|, 6|c3|) (1 + |r|)
        let c2 = coeffs.get(2).copied().unwrap_or(0.0);
        let c3 = coeffs.get(3).copied().unwrap_or(0.0);
        let growth_constant = (2.0 * c2.abs()).max(6.0 * c3.abs());
        let name = format!("polynomial{coeffs:?}");
        Ok(NonlinearPotential {
            name,
            beta,
            beta_prime,
            beta_hat,
            growth_constant,
            lipschitz_exponents: (2.0, 2.0),
            phi_lipschitz: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn beta(&self, r: f64) -> f64 {
        (self.beta)(r)
    }

    pub fn beta_prime(&self, r: f64) -> f64 {
        (self.beta_prime)(r)
    }

    pub fn beta_hat(&self, r: f64) -> f64 {
        (self.beta_hat)(r)
    }

    /// `J_lambda(g) = (I + lambda beta)^{-1}(g)`: the unique `x` with
    /// `x + lambda beta(x) = g`, by Newton safeguarded with bisection.
    pub fn yosida_resolvent(&self, lambda: f64, g: f64) -> Result<f64> {
        if !(lambda > 0.0) || !g.is_finite() {
            return Err(Error::ResolventNonConvergence { lambda, g });
        }
        let fail = || Error::ResolventNonConvergence { lambda, g };
        let residual = |x: f64| x + lambda * self.beta(x) - g;
        let tol = 1e-13 * (1.0 + g.abs());
        let (mut lo, mut hi) = (g.min(0.0), g.max(0.0));
        let mut f_lo = residual(lo);
        let mut f_hi = residual(hi);
        let mut widen = 0;
        while f_lo > 0.0 || f_hi < 0.0 {
            let width = (hi - lo).max(1.0);
            if f_lo > 0.0 {
                lo -= width;
                f_lo = residual(lo);
            }
            if f_hi < 0.0 {
                hi += width;
                f_hi = residual(hi);
            }
            widen += 1;
            if widen > 200 {
                return Err(fail());
            }
        }
        if f_lo.abs() <= tol {
            return Ok(lo);
        }
        if f_hi.abs() <= tol {
            return Ok(hi);
        }
        let mut x = if g == 0.0 { 0.0 } else { 0.5 * (lo + hi) };
        for _ in 0..400 {
            let fx = residual(x);
            if fx.abs() <= tol {
                return Ok(x);
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = 1.0 + lambda * self.beta_prime(x);
            let newton = x - fx / slope;
            x = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
                let fx = residual(x);
                if fx.abs() <= tol {
                    return Ok(x);
                }
                // bracket collapsed without meeting the tolerance
                return Err(fail());
            }
        }
        Err(fail())
    }

    /// `beta_lambda(r) = (r - J_lambda(r)) / lambda`.
    pub fn yosida_approx(&self, lambda: f64, r: f64) -> Result<f64> {
        let j = self.yosida_resolvent(lambda, r)?;
        Ok((r - j) / lambda)
    }

    /// `beta_lambda'(r) = beta'(J) / (1 + lambda beta'(J))`.
    pub fn yosida_derivative(&self, lambda: f64, r: f64) -> Result<f64> {
        let j = self.yosida_resolvent(lambda, r)?;
        let d = self.beta_prime(j);
        Ok(d / (1.0 + lambda * d))
    }

    /// Checks `beta(0) = 0`, `beta_hat(0) = 0`, monotonicity on all sample
    /// pairs and nonnegativity of the primitive.
    pub fn check_monotone(&self, samples: &[f64]) -> Result<()> {
        let b0 = self.beta(0.0);
        if b0.abs() > 1e-14 || self.beta_hat(0.0).abs() > 1e-14 {
            return Err(Error::hypothesis(
                Hypothesis::BetaMonotone,
                format!("beta(0) = {b0}, beta_hat(0) = {}", self.beta_hat(0.0)),
            ));
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let values: Vec<f64> = sorted.iter().map(|&r| self.beta(r)).collect();
        for k in 1..sorted.len() {
            let scale = 1e-13 * (1.0 + values[k].abs().max(values[k - 1].abs()));
            if values[k] < values[k - 1] - scale {
                return Err(Error::hypothesis(
                    Hypothesis::BetaMonotone,
                    format!(
                        "beta decreases between r = {} and r = {} ({} > {})",
                        sorted[k - 1],
                        sorted[k],
                        values[k - 1],
                        values[k]
                    ),
                ));
            }
        }
        for &r in &sorted {
            let bh = self.beta_hat(r);
            if bh < -1e-14 * (1.0 + r.abs().powi(4)) {
                return Err(Error::hypothesis(
                    Hypothesis::BetaMonotone,
                    format!("primitive negative: beta_hat({r}) = {bh}"),
                ));
            }
        }
        Ok(())
    }

    /// Largest observed `|beta''(r)| / (1 + |r|)` from centered differences of
    /// `beta_prime` with step `1e-4`; errors when it exceeds `growth_constant`.
    pub fn check_growth(&self, samples: &[f64]) -> Result<f64> {
        let step = 1e-4;
        let mut worst: f64 = 0.0;
        for &r in samples {
            let second = (self.beta_prime(r + step) - self.beta_prime(r - step)) / (2.0 * step);
            worst = worst.max(second.abs() / (1.0 + r.abs()));
        }
        // differencing error is O(step^2 |beta''''|) plus rounding
        let slack = 1e-6 * (1.0 + self.growth_constant);
        if worst > self.growth_constant + slack {
            return Err(Error::hypothesis(
                Hypothesis::BetaGrowth,
                format!(
                    "|beta''(r)|/(1+|r|) reaches {worst} above C_beta = {}",
                    self.growth_constant
                ),
            ));
        }
        Ok(worst)
    }
}

/// Globally Lipschitz perturbation `pi`.
#[derive(Clone)]
pub struct LipschitzPerturbation {
    name: String,
    pi: ScalarFn,
    pi_prime: Option<ScalarFn>,
    pub lipschitz_constant: f64,
}

impl fmt::Debug for LipschitzPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzPerturbation")
            .field("name", &self.name)
            .field("lipschitz_constant", &self.lipschitz_constant)
            .field("has_derivative", &self.pi_prime.is_some())
            .finish()
    }
}

impl LipschitzPerturbation {
    pub fn new(name: impl Into<String>, pi: ScalarFn, pi_prime: Option<ScalarFn>, lipschitz_constant: f64) -> Self {
        LipschitzPerturbation {
            name: name.into(),
            pi,
            pi_prime,
            lipschitz_constant,
        }
    }

    pub fn zero() -> Self {
        Self::affine(0.0, 0.0)
    }

    /// `pi(r) = offset + slope * r`.
    pub fn affine(offset: f64, slope: f64) -> Self {
        LipschitzPerturbation {
            name: format!("affine({offset}, {slope})"),
            pi: Arc::new(move |r| offset + slope * r),
            pi_prime: Some(Arc::new(move |_| slope)),
            lipschitz_constant: slope.abs(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pi(&self, r: f64) -> f64 {
        (self.pi)(r)
    }

    pub fn pi_prime(&self, r: f64) -> Option<f64> {
        self.pi_prime.as_ref().map(|d| d(r))
    }

    pub fn has_derivative(&self) -> bool {
        self.pi_prime.is_some()
    }

    /// Largest observed difference quotient over consecutive sample pairs.
    pub fn check_lipschitz(&self, samples: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, &r) in samples.iter().enumerate() {
            for &s in &samples[i + 1..] {
                if r != s {
                    worst = worst.max((self.pi(r) - self.pi(s)).abs() / (r - s).abs());
                }
            }
        }
        if worst > self.lipschitz_constant * (1.0 + 1e-12) + 1e-14 {
            return Err(Error::hypothesis(
                Hypothesis::PerturbationLipschitz,
                format!(
                    "difference quotient {worst} exceeds Lipschitz constant {}",
                    self.lipschitz_constant
                ),
            ));
        }
        Ok(worst)
    }
}

/// Evenly spaced scalar sample points on `[-radius, radius]`.
pub fn scalar_samples(radius: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![0.0];
    }
    (0..count)
        .map(|k| -radius + 2.0 * radius * k as f64 / (count - 1) as f64)
        .collect()
}
