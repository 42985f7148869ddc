//! Implicit time stepping for the coupled temperature / order-parameter
//! system.
//!
//! One step solves the two coupled equations
//!
//! ```text
//! theta + h A1 theta = theta_n + phi_n + h f_{n+1} - phi
//! L phi + h B phi + h^2 A2 phi + h^2 beta(phi) + h^2 pi(phi)
//!       = L phi_n + h L v_n + h B phi_n + h^2 theta
//! ```
//!
//! by iterating `phi <- S(phi) = B(A(phi))`, where `A` solves the linear
//! temperature substep and `B` the nonlinear order-parameter substep. The map
//! `S` is a contraction in the discrete `L^2` norm with factor at most
//! `kappa(h) = h / (2 sqrt(c_L - h^2 - C_L h^2))`.

use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{conjugate_gradient, gauss_legendre_5, weighted_norm, CgOutcome};
use crate::operator_core::{LinearOperatorSpec, LipschitzPerturbation, NonlinearPotential};
use crate::spatial::{assemble_damping, assemble_laplacian, FieldSpace, ProblemInstance, SourceFn};

/// Successive fixed-point increments below this fraction of `1 + |phi_n|`
/// are at the level of solver rounding, so their ratios are not recorded as
/// contraction measurements.
pub const RATIO_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub final_time: f64,
    pub steps: usize,
    /// Nonlinear residual tolerance of the phi-substep, relative to `1 + |g|`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Fixed-point stopping tolerance relative to `1 + |phi_n|`.
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Acceptance tolerance of the temperature substep residual relative to `|g|`.
    pub linear_tol: f64,
    /// Coercivity constant of `L`.
    pub c_l: f64,
    /// Lipschitz constant of `pi`.
    pub lipschitz: f64,
}

impl SchemeConfig {
    pub fn new(final_time: f64, steps: usize, c_l: f64, lipschitz: f64) -> Self {
        SchemeConfig {
            final_time,
            steps,
            newton_tol: 1e-11,
            newton_max_iter: 50,
            fp_tol: 1e-11,
            fp_max_iter: 200,
            linear_tol: 1e-11,
            c_l,
            lipschitz,
        }
    }

    /// Config matching an instance: `c_L` from `L`, `C_L` from `pi`.
    pub fn for_instance(instance: &ProblemInstance, final_time: f64, steps: usize) -> Self {
        Self::new(
            final_time,
            steps,
            instance.inertia_constant(),
            instance.perturbation.lipschitz_constant,
        )
    }

    pub fn h(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    /// Upper end `sqrt(c_L / (1 + C_L))` of the admissible step window.
    pub fn admissibility_window(&self) -> f64 {
        (self.c_l / (1.0 + self.lipschitz)).sqrt()
    }

    pub fn contraction_bound(&self) -> Result<f64> {
        contraction_bound(self.h(), self.c_l, self.lipschitz)
    }

    /// Checks the step window and `kappa(h) < 1`.
    pub fn validate(&self) -> Result<f64> {
        if self.steps == 0 || !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return Err(Error::Config(format!(
                "final time {} with {} steps",
                self.final_time, self.steps
            )));
        }
        let kappa = self.contraction_bound()?;
        if kappa >= 1.0 {
            return Err(Error::hypothesis(
                Hypothesis::Contraction,
                format!(
                    "h = {} gives contraction factor kappa = {kappa} >= 1; reduce the step",
                    self.h()
                ),
            ));
        }
        Ok(kappa)
    }
}

/// `kappa(h) = h / (2 sqrt(c_L - h^2 - C_L h^2))`, defined for `h` inside the
/// window `h < sqrt(c_L / (1 + C_L))`.
pub fn contraction_bound(h: f64, c_l: f64, lipschitz: f64) -> Result<f64> {
    let margin = c_l - h * h * (1.0 + lipschitz);
    if !(h > 0.0) || !(margin > 0.0) {
        let window = (c_l / (1.0 + lipschitz)).sqrt();
        return Err(Error::hypothesis(
            Hypothesis::StepWindow,
            format!(
                "h = {h} exceeds the admissibility window h < sqrt(c_L/(1+C_L)) = {window} (c_L = {c_l}, C_L = {lipschitz})"
            ),
        ));
    }
    Ok(h / (2.0 * margin.sqrt()))
}

/// `f_k = (1/h) int_{(k-1)h}^{kh} f(s) ds` by five-point Gauss-Legendre.
pub fn average_source(f: &SourceFn, k: usize, h: f64) -> Vec<f64> {
    let a = (k as f64 - 1.0) * h;
    let b = k as f64 * h;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc: Option<Vec<f64>> = None;
    for &(x, w) in crate::linalg::GAUSS_LEGENDRE_5.iter() {
        let values = f(mid + half * x);
        match acc.as_mut() {
            None => acc = Some(values.iter().map(|v| 0.5 * w * v).collect()),
            Some(sum) => {
                for (s, v) in sum.iter_mut().zip(&values) {
                    *s += 0.5 * w * v;
                }
            }
        }
    }
    acc.unwrap_or_default()
}

/// Scalar version of [`average_source`], handy for checks.
pub fn average_scalar<G: FnMut(f64) -> f64>(g: G, k: usize, h: f64) -> f64 {
    gauss_legendre_5((k as f64 - 1.0) * h, k as f64 * h, g) / h
}

/// The operators of the order-parameter substep.
#[derive(Debug, Clone)]
pub struct PhiSystem {
    pub l: LinearOperatorSpec,
    pub b: LinearOperatorSpec,
    pub a2: LinearOperatorSpec,
    pub potential: NonlinearPotential,
    pub perturbation: LipschitzPerturbation,
}

impl PhiSystem {
    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn weights(&self) -> &[f64] {
        self.l.weights()
    }

    /// `L phi + h B phi + h^2 A2 phi` into `out`.
    fn apply_linear(&self, h: f64, phi: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.l.apply_into(phi, out);
        self.b.apply_into(phi, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += h * s;
        }
        self.a2.apply_into(phi, scratch);
        let h2 = h * h;
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += h2 * s;
        }
    }

    /// `F(phi) = L phi + h B phi + h^2 A2 phi + h^2 beta(phi) + h^2 pi(phi) - g`,
    /// with `beta` replaced by its Yosida approximation when `lambda` is set.
    pub fn residual(&self, h: f64, phi: &[f64], g: &[f64], lambda: Option<f64>) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.apply_linear(h, phi, &mut out, &mut scratch);
        let h2 = h * h;
        for i in 0..n {
            let beta = match lambda {
                Some(l) => self.potential.yosida_approx(l, phi[i])?,
                None => self.potential.beta(phi[i]),
            };
            out[i] += h2 * (beta + self.perturbation.pi(phi[i])) - g[i];
        }
        Ok(out)
    }

    fn slopes(&self, phi: &[f64], lambda: Option<f64>) -> Result<Vec<f64>> {
        phi.iter()
            .map(|&r| {
                let beta = match lambda {
                    Some(l) => self.potential.yosida_derivative(l, r)?,
                    None => self.potential.beta_prime(r),
                };
                // a missing pi' is dropped from the Jacobian
                Ok(beta + self.perturbation.pi_prime(r).unwrap_or(0.0))
            })
            .collect()
    }
}

/// Settings of the phi-substep solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiSolveInfo {
    pub newton_iterations: usize,
    /// `|F(phi)|_H / (1 + |g|_H)` at exit.
    pub relative_residual: f64,
    pub linear_iterations: usize,
    pub yosida_fallback: bool,
}

/// The map `A`: solves `theta + h A1 theta = g` by conjugate gradients.
/// `guess` seeds the iteration.
pub fn solve_theta_substep(
    g: &[f64],
    h: f64,
    a1: &LinearOperatorSpec,
    linear_tol: f64,
    guess: Option<&[f64]>,
) -> Result<(Vec<f64>, CgOutcome)> {
    a1.check_dim(g)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size {h} must be positive")));
    }
    let n = g.len();
    let mut x = match guess {
        Some(x0) if x0.len() == n => x0.to_vec(),
        _ => g.to_vec(),
    };
    let weights = a1.weights();
    let g_norm = weighted_norm(weights, g);
    let apply = |u: &[f64], out: &mut [f64]| {
        let mut tmp = vec![0.0; u.len()];
        a1.apply_into(u, &mut tmp);
        for i in 0..u.len() {
            out[i] = u[i] + h * tmp[i];
        }
    };
    let outcome = conjugate_gradient(apply, g, &mut x, weights, 1e-15 * g_norm, 4 * n + 50)?;
    if outcome.residual > linear_tol * g_norm {
        return Err(Error::LinearSolve {
            iterations: outcome.iterations,
            residual: outcome.relative_residual(),
        });
    }
    Ok((x, outcome))
}

/// The map `B`: solves
/// `L phi + h B phi + h^2 A2 phi + h^2 beta(phi) + h^2 pi(phi) = g`
/// by damped Newton, falling back to Yosida continuation in `lambda` when
/// Newton stalls.
pub fn solve_phi_substep(
    g: &[f64],
    h: f64,
    system: &PhiSystem,
    settings: NewtonSettings,
    guess: Option<&[f64]>,
) -> Result<(Vec<f64>, PhiSolveInfo)> {
    system.l.check_dim(g)?;
    let start = match guess {
        Some(x0) if x0.len() == g.len() => x0.to_vec(),
        _ => g.to_vec(),
    };
    match newton(g, h, system, settings, start.clone(), None) {
        Ok(out) => Ok(out),
        Err(first) => {
            warn!("phi-substep Newton failed ({first}); trying Yosida continuation");
            let mut phi = start;
            let mut lambda = h * h;
            let mut total = PhiSolveInfo::default();
            for _ in 0..12 {
                let (next, info) = newton(g, h, system, settings, phi, Some(lambda))?;
                phi = next;
                total.newton_iterations += info.newton_iterations;
                total.linear_iterations += info.linear_iterations;
                lambda *= 0.1;
            }
            let (phi, info) = newton(g, h, system, settings, phi, None)
                .map_err(|e| Error::NonlinearSolve(format!("Yosida continuation did not recover: {e}")))?;
            total.newton_iterations += info.newton_iterations;
            total.linear_iterations += info.linear_iterations;
            total.relative_residual = info.relative_residual;
            total.yosida_fallback = true;
            Ok((phi, total))
        }
    }
}

fn newton(
    g: &[f64],
    h: f64,
    system: &PhiSystem,
    settings: NewtonSettings,
    mut phi: Vec<f64>,
    lambda: Option<f64>,
) -> Result<(Vec<f64>, PhiSolveInfo)> {
    let weights = system.weights();
    let n = g.len();
    let scale = 1.0 + weighted_norm(weights, g);
    let target = settings.tol * scale;
    let mut f = system.residual(h, &phi, g, lambda)?;
    let mut f_norm = weighted_norm(weights, &f);
    let mut info = PhiSolveInfo::default();
    let h2 = h * h;
    let mut polished = false;
    loop {
        if f_norm <= target {
            if polished || f_norm == 0.0 {
                break;
            }
            polished = true;
        } else if info.newton_iterations >= settings.max_iter {
            return Err(Error::NonlinearSolve(format!(
                "Newton reached {} iterations with |F| = {f_norm:e} (target {target:e})",
                settings.max_iter
            )));
        }
        let slopes = system.slopes(&phi, lambda)?;
        let apply = |u: &[f64], out: &mut [f64]| {
            let mut scratch = vec![0.0; u.len()];
            system.apply_linear(h, u, out, &mut scratch);
            for i in 0..u.len() {
                out[i] += h2 * slopes[i] * u[i];
            }
        };
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        let cg = conjugate_gradient(apply, &rhs, &mut delta, weights, 1e-10 * f_norm, 4 * n + 50)?;
        info.linear_iterations += cg.iterations;
        // Armijo backtracking on |F|
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-10 {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + t * d).collect();
            let f_trial = system.residual(h, &trial, g, lambda)?;
            let n_trial = weighted_norm(weights, &f_trial);
            if n_trial <= (1.0 - 1e-4 * t) * f_norm || (polished && n_trial < f_norm) {
                phi = trial;
                f = f_trial;
                f_norm = n_trial;
                accepted = true;
                break;
            }
            if polished {
                break;
            }
            t *= 0.5;
        }
        info.newton_iterations += 1;
        if !accepted {
            if polished {
                break;
            }
            return Err(Error::NonlinearSolve(format!(
                "line search failed at |F| = {f_norm:e} (target {target:e})"
            )));
        }
    }
    info.relative_residual = f_norm / scale;
    Ok((phi, info))
}

/// All operators of one problem instance, assembled once per trajectory.
#[derive(Debug, Clone)]
pub struct SchemeOperators {
    pub theta_space: FieldSpace,
    pub phi_space: FieldSpace,
    pub a1: LinearOperatorSpec,
    pub phi: PhiSystem,
}

impl SchemeOperators {
    pub fn assemble(instance: &ProblemInstance) -> Result<Self> {
        let theta_space = instance.theta_space();
        let phi_space = instance.phi_space();
        let a1 = assemble_laplacian(&instance.grid, instance.bc_theta)?;
        let a2 = assemble_laplacian(&instance.grid, instance.bc_phi)?;
        let b = assemble_damping(instance)?;
        let l = LinearOperatorSpec::identity(phi_space.weights().to_vec());
        Ok(SchemeOperators {
            theta_space,
            phi_space,
            a1,
            phi: PhiSystem {
                l,
                b,
                a2,
                potential: instance.potential.clone(),
                perturbation: instance.perturbation.clone(),
            },
        })
    }
}

/// Nodal values `(theta_n, phi_n, v_n, z_n)` at `t = n h` on the full grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub step: usize,
    pub time: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
}

impl StepState {
    /// State at `n = 0`; `z_0` is filled in after the first step.
    pub fn initial(instance: &ProblemInstance) -> Self {
        StepState {
            step: 0,
            time: 0.0,
            theta: instance.theta0.clone(),
            phi: instance.phi0.clone(),
            v: instance.v0.clone(),
            z: vec![0.0; instance.grid.node_count()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub fixed_point_iterations: usize,
    /// `|phi^{k+1} - phi^k|_H` for every iteration.
    pub increments: Vec<f64>,
    /// Ratios of successive increments above the rounding floor.
    pub contraction_ratios: Vec<f64>,
    pub contraction_bound: f64,
    /// `kappa / (1 - kappa) |phi^k - phi^{k-1}|` at exit.
    pub fixed_point_error_bound: f64,
    pub newton_iterations: Vec<usize>,
    pub newton_residuals: Vec<f64>,
    /// Relative residuals of the temperature substep solves.
    pub linear_residuals: Vec<f64>,
    pub yosida_fallbacks: usize,
    /// Residual norm of the temperature equation and its scale.
    pub theta_equation_residual: f64,
    pub theta_equation_scale: f64,
    /// Residual norm of the order-parameter equation and its scale.
    pub phi_equation_residual: f64,
    pub phi_equation_scale: f64,
}

impl StepReport {
    pub fn max_ratio(&self) -> f64 {
        self.contraction_ratios.iter().cloned().fold(0.0, f64::max)
    }
}

/// Residual norms of both scheme equations for the step `prev -> next`,
/// measured on each equation's unknowns.
pub fn scheme_residuals(
    prev: &StepState,
    next: &StepState,
    f_next: &[f64],
    h: f64,
    ops: &SchemeOperators,
) -> Result<(f64, f64)> {
    let ts = &ops.theta_space;
    let ps = &ops.phi_space;
    let theta_next = ts.restrict(&next.theta);
    let a1_theta = ops.a1.apply(&theta_next)?;
    let dtheta = ts.restrict(&crate::linalg::sub(&next.theta, &prev.theta));
    let dphi = ts.restrict(&crate::linalg::sub(&next.phi, &prev.phi));
    let f_r = ts.restrict(f_next);
    let r1: Vec<f64> = (0..ts.dim())
        .map(|i| dtheta[i] / h + dphi[i] / h + a1_theta[i] - f_r[i])
        .collect();
    let res1 = weighted_norm(ts.weights(), &r1);

    let sys = &ops.phi;
    let phi = ps.restrict(&next.phi);
    let lz = sys.l.apply(&ps.restrict(&next.z))?;
    let bv = sys.b.apply(&ps.restrict(&next.v))?;
    let a2phi = sys.a2.apply(&phi)?;
    let theta_p = ps.restrict(&next.theta);
    let r2: Vec<f64> = (0..ps.dim())
        .map(|i| {
            lz[i] + bv[i] + a2phi[i] + sys.potential.beta(phi[i]) + sys.perturbation.pi(phi[i]) - theta_p[i]
        })
        .collect();
    let res2 = weighted_norm(ps.weights(), &r2);
    Ok((res1, res2))
}

/// One step of the scheme with the fixed-point iteration started from `phi_n`.
pub fn fixed_point_step(
    state: &StepState,
    f_next: &[f64],
    config: &SchemeConfig,
    ops: &SchemeOperators,
) -> Result<(StepState, StepReport)> {
    fixed_point_step_from(state, f_next, config, ops, &state.phi)
}

/// One step with an explicit starting guess for the fixed-point iteration
/// (full nodal vector).
pub fn fixed_point_step_from(
    state: &StepState,
    f_next: &[f64],
    config: &SchemeConfig,
    ops: &SchemeOperators,
    phi_start: &[f64],
) -> Result<(StepState, StepReport)> {
    let kappa = config.validate()?;
    let h = config.h();
    let ts = &ops.theta_space;
    let ps = &ops.phi_space;
    let sys = &ops.phi;
    let nodes = state.phi.len();
    for v in [&state.theta, &state.phi, &state.v, f_next, phi_start] {
        if v.len() != nodes {
            return Err(Error::DimensionMismatch {
                expected: nodes,
                actual: v.len(),
            });
        }
    }
    let newton_settings = NewtonSettings {
        tol: config.newton_tol,
        max_iter: config.newton_max_iter,
    };

    // temperature right-hand side without the -phi term
    let theta_base: Vec<f64> = ts.restrict(
        &(0..nodes)
            .map(|i| state.theta[i] + state.phi[i] + h * f_next[i])
            .collect::<Vec<_>>(),
    );
    // order-parameter right-hand side without the h^2 theta term
    let phi_n = ps.restrict(&state.phi);
    let v_n = ps.restrict(&state.v);
    let l_phi = sys.l.apply(&phi_n)?;
    let l_v = sys.l.apply(&v_n)?;
    let b_phi = sys.b.apply(&phi_n)?;
    let phi_base: Vec<f64> = (0..ps.dim()).map(|i| l_phi[i] + h * l_v[i] + h * b_phi[i]).collect();

    let theta_map = |phi_full: &[f64], guess: Option<&[f64]>| -> Result<(Vec<f64>, CgOutcome)> {
        let phi_t = ts.restrict(phi_full);
        let g: Vec<f64> = theta_base.iter().zip(&phi_t).map(|(b, p)| b - p).collect();
        solve_theta_substep(&g, h, &ops.a1, config.linear_tol, guess)
    };

    let mut report = StepReport {
        contraction_bound: kappa,
        ..StepReport::default()
    };
    let phi_n_norm = weighted_norm(ps.weights(), &phi_n);
    let stop = config.fp_tol * (1.0 + phi_n_norm);
    let resolution = RATIO_RESOLUTION * (1.0 + phi_n_norm);

    let mut phi_k = ps.restrict(phi_start);
    let mut theta_guess: Option<Vec<f64>> = None;
    let mut last_increment: Option<f64> = None;
    let mut converged = false;
    for _ in 0..config.fp_max_iter {
        let (theta_k, cg) = theta_map(&ps.extend(&phi_k), theta_guess.as_deref())?;
        report.linear_residuals.push(cg.relative_residual());
        let theta_on_phi = ps.restrict(&ts.extend(&theta_k));
        let g: Vec<f64> = phi_base
            .iter()
            .zip(&theta_on_phi)
            .map(|(b, t)| b + h * h * t)
            .collect();
        let (phi_next, info) = solve_phi_substep(&g, h, sys, newton_settings, Some(&phi_k))?;
        report.newton_iterations.push(info.newton_iterations);
        report.newton_residuals.push(info.relative_residual);
        if info.yosida_fallback {
            report.yosida_fallbacks += 1;
        }
        let diff: Vec<f64> = phi_next.iter().zip(&phi_k).map(|(a, b)| a - b).collect();
        let increment = weighted_norm(ps.weights(), &diff);
        report.increments.push(increment);
        if let Some(prev) = last_increment {
            if prev >= resolution {
                let ratio = increment / prev;
                report.contraction_ratios.push(ratio);
                if ratio > 1.0 {
                    return Err(Error::FixedPoint(format!(
                        "empirical contraction ratio {ratio} > 1 (bound {kappa}); step size violates admissibility"
                    )));
                }
            }
        }
        last_increment = Some(increment);
        theta_guess = Some(theta_k);
        phi_k = phi_next;
        report.fixed_point_iterations += 1;
        if increment <= stop {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FixedPoint(format!(
            "no convergence in {} iterations (last increment {:e}, tolerance {stop:e})",
            config.fp_max_iter,
            last_increment.unwrap_or(f64::NAN)
        )));
    }
    report.fixed_point_error_bound = kappa / (1.0 - kappa) * last_increment.unwrap_or(0.0);

    let phi_full = ps.extend(&phi_k);
    let (theta_next, cg) = theta_map(&phi_full, theta_guess.as_deref())?;
    report.linear_residuals.push(cg.relative_residual());
    let theta_full = ts.extend(&theta_next);
    let v_next: Vec<f64> = phi_full.iter().zip(&state.phi).map(|(a, b)| (a - b) / h).collect();
    let z_next: Vec<f64> = v_next.iter().zip(&state.v).map(|(a, b)| (a - b) / h).collect();
    let next = StepState {
        step: state.step + 1,
        time: (state.step + 1) as f64 * h,
        theta: theta_full,
        phi: phi_full,
        v: v_next,
        z: z_next,
    };

    let (res1, res2) = scheme_residuals(state, &next, f_next, h, ops)?;
    let g_theta_norm = weighted_norm(
        ts.weights(),
        &theta_base
            .iter()
            .zip(ts.restrict(&next.phi))
            .map(|(b, p)| b - p)
            .collect::<Vec<_>>(),
    );
    report.theta_equation_residual = res1;
    report.theta_equation_scale = (1.0 + g_theta_norm) / h;
    let g_phi_norm = weighted_norm(
        ps.weights(),
        &phi_base
            .iter()
            .zip(ps.restrict(&next.theta))
            .map(|(b, t)| b + h * h * t)
            .collect::<Vec<_>>(),
    );
    report.phi_equation_residual = res2;
    report.phi_equation_scale = (1.0 + g_phi_norm) / (h * h);
    debug!(
        "step {}: {} fixed-point iterations, max ratio {:.3e} (kappa {:.3e})",
        next.step,
        report.fixed_point_iterations,
        report.max_ratio(),
        kappa
    );
    Ok((next, report))
}

/// A full discrete solution `n = 0, ..., N`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SchemeConfig,
    pub instance: Arc<ProblemInstance>,
    pub states: Vec<StepState>,
    pub reports: Vec<StepReport>,
    /// `f_{n+1}` for `n = 0, ..., N-1`.
    pub sources: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn h(&self) -> f64 {
        self.config.h()
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.config.final_time
    }

    pub fn max_contraction_ratio(&self) -> f64 {
        self.reports.iter().map(StepReport::max_ratio).fold(0.0, f64::max)
    }
}

/// Runs all `N` steps; `z_0` is set to `z_1` after the first one.
pub fn advance_trajectory(instance: &ProblemInstance, config: &SchemeConfig) -> Result<Trajectory> {
    config.validate()?;
    let ops = SchemeOperators::assemble(instance)?;
    advance_with_operators(instance, config, &ops)
}

pub fn advance_with_operators(
    instance: &ProblemInstance,
    config: &SchemeConfig,
    ops: &SchemeOperators,
) -> Result<Trajectory> {
    let h = config.h();
    let mut states = Vec::with_capacity(config.steps + 1);
    let mut reports = Vec::with_capacity(config.steps);
    let mut sources = Vec::with_capacity(config.steps);
    states.push(StepState::initial(instance));
    for n in 0..config.steps {
        let f_next = average_source(&instance.source, n + 1, h);
        let (next, report) = fixed_point_step(&states[n], &f_next, config, ops).map_err(|e| Error::Step {
            step: n + 1,
            source: Box::new(e),
        })?;
        if n == 0 {
            states[0].z = next.z.clone();
        }
        states.push(next);
        reports.push(report);
        sources.push(f_next);
    }
    Ok(Trajectory {
        config: config.clone(),
        instance: Arc::new(instance.clone()),
        states,
        reports,
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{zero_source, Grid};
    use std::sync::Arc;

    #[test]
    fn contraction_bound_values() {
        let k = contraction_bound(0.1, 1.0, 1.0).unwrap();
        assert!((k - 0.1 / (2.0 * 0.98f64.sqrt())).abs() < 1e-15);
        assert!((k - 0.050508).abs() < 1e-6);
        let k9 = contraction_bound(0.9, 1.0, 0.0).unwrap();
        assert!((k9 - 0.9 / (2.0 * 0.19f64.sqrt())).abs() < 1e-14 && k9 > 1.0);
        assert!(contraction_bound(1e-8, 1.0, 1.0).unwrap() < 1e-8);
        let err = contraction_bound(2.0, 1.0, 1.0).unwrap_err().to_string();
        assert!(err.contains("0.7071067811865"), "{err}");
        let mut cfg = SchemeConfig::new(0.9, 1, 1.0, 0.0);
        assert!(matches!(
            cfg.validate(),
            Err(Error::Hypothesis {
                hypothesis: Hypothesis::Contraction,
                ..
            })
        ));
        cfg.steps = 9;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn average_source_cases() {
        let c: SourceFn = Arc::new(|_| vec![3.0, -1.0]);
        let avg = average_source(&c, 2, 0.1);
        assert!((avg[0] - 3.0).abs() < 1e-14 && (avg[1] + 1.0).abs() < 1e-14);
        let lin: SourceFn = Arc::new(|t| vec![t]);
        assert!((average_source(&lin, 1, 0.5)[0] - 0.25).abs() < 1e-15);
        let s: SourceFn = Arc::new(|t| vec![t.sin()]);
        let expected = (0.2f64.cos() - 0.3f64.cos()) / 0.1;
        assert!((average_source(&s, 3, 0.1)[0] - expected).abs() < 1e-13);
    }

    fn small_system(n: usize) -> PhiSystem {
        let w = vec![1.0; n];
        PhiSystem {
            l: LinearOperatorSpec::identity(w.clone()),
            b: LinearOperatorSpec::zero(w.clone()),
            a2: LinearOperatorSpec::zero(w),
            potential: NonlinearPotential::cubic(1.0),
            perturbation: LipschitzPerturbation::zero(),
        }
    }

    #[test]
    fn phi_substep_single_node_exact_root() {
        let sys = small_system(1);
        let settings = NewtonSettings { tol: 1e-13, max_iter: 50 };
        let (phi, info) = solve_phi_substep(&[1.01], 0.1, &sys, settings, None).unwrap();
        assert!((phi[0] - 1.0).abs() < 1e-12, "{phi:?}");
        assert!(!info.yosida_fallback);
    }

    #[test]
    fn phi_substep_linear_neumann_constant() {
        let g = Grid::line(9, 1.0).unwrap();
        let a2 = assemble_laplacian(&g, crate::spatial::BoundaryCondition::Neumann).unwrap();
        let w = a2.weights().to_vec();
        let sys = PhiSystem {
            l: LinearOperatorSpec::identity(w.clone()),
            b: LinearOperatorSpec::identity(w),
            a2,
            potential: NonlinearPotential::zero(),
            perturbation: LipschitzPerturbation::zero(),
        };
        let h = 0.1;
        let c = 0.7;
        let rhs = vec![c * (1.0 + h); 9];
        let settings = NewtonSettings { tol: 1e-13, max_iter: 50 };
        let (phi, _) = solve_phi_substep(&rhs, h, &sys, settings, None).unwrap();
        assert!(phi.iter().all(|p| (p - c).abs() < 1e-12));
    }

    #[test]
    fn phi_substep_without_pi_derivative_still_converges() {
        let mut sys = small_system(3);
        sys.perturbation = LipschitzPerturbation::new("abs", Arc::new(|r: f64| r.abs()), None, 1.0);
        let g = [0.4, -0.8, 1.3];
        let settings = NewtonSettings { tol: 1e-12, max_iter: 100 };
        let (phi, info) = solve_phi_substep(&g, 0.3, &sys, settings, None).unwrap();
        let r = sys.residual(0.3, &phi, &g, None).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-11));
        assert!(info.relative_residual <= 1e-12);
    }

    #[test]
    fn theta_substep_cases() {
        let g = Grid::line(9, 1.0).unwrap();
        let a1 = assemble_laplacian(&g, crate::spatial::BoundaryCondition::Neumann).unwrap();
        let (zero, _) = solve_theta_substep(&[0.0; 9], 0.1, &a1, 1e-12, None).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let (c, _) = solve_theta_substep(&[2.0; 9], 0.1, &a1, 1e-12, None).unwrap();
        assert!(c.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(solve_theta_substep(&[1.0; 3], 0.1, &a1, 1e-12, None).is_err());
    }

    fn zero_instance(nodes: usize) -> ProblemInstance {
        let g = Grid::line(nodes, 1.0).unwrap();
        let z = vec![0.0; nodes];
        ProblemInstance::p1(
            g,
            NonlinearPotential::cubic(1.0),
            LipschitzPerturbation::affine(0.0, -1.0),
            z.clone(),
            z.clone(),
            z,
            zero_source(nodes),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let inst = zero_instance(9);
        let cfg = SchemeConfig::for_instance(&inst, 1.0, 5);
        let traj = advance_trajectory(&inst, &cfg).unwrap();
        assert_eq!(traj.states.len(), 6);
        for s in &traj.states {
            assert!(s.theta.iter().chain(&s.phi).chain(&s.v).chain(&s.z).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_step_trajectory_matches_fixed_point_step() {
        let g = Grid::line(9, 1.0).unwrap();
        let theta0 = g.sample(|x| (std::f64::consts::PI * x[0]).sin());
        let phi0 = g.sample(|x| (std::f64::consts::PI * x[0]).cos());
        let inst = ProblemInstance::p1(
            g,
            NonlinearPotential::cubic(1.0),
            LipschitzPerturbation::affine(0.0, -1.0),
            theta0,
            phi0.clone(),
            phi0,
            zero_source(9),
        )
        .unwrap();
        let cfg = SchemeConfig::for_instance(&inst, 0.2, 1);
        let traj = advance_trajectory(&inst, &cfg).unwrap();
        let ops = SchemeOperators::assemble(&inst).unwrap();
        let (next, _) = fixed_point_step(&StepState::initial(&inst), &[0.0; 9], &cfg, &ops).unwrap();
        assert_eq!(traj.states[1], next);
        assert_eq!(traj.states[0].z, next.z);
    }

    #[test]
    fn rejects_inadmissible_step() {
        let inst = zero_instance(5);
        let cfg = SchemeConfig::for_instance(&inst, 2.0, 1);
        assert!(matches!(
            advance_trajectory(&inst, &cfg),
            Err(Error::Hypothesis {
                hypothesis: Hypothesis::StepWindow,
                ..
            })
        ));
    }
}
