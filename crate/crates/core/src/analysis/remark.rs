//! Exact identities relating the hat and bar interpolants.
//!
//! Sup-in-time norms of piecewise-linear functions are attained at interval
//! endpoints (norms are convex), so they are evaluated there, with one-sided
//! limits for the piecewise-constant parts. Time integrals of piecewise
//! polynomials use Gauss-Legendre, which is exact at these degrees.

use serde::{Deserialize, Serialize};

use super::interpolants::{build_interpolants, Field, Interpolants};
use crate::linalg::{sub, GAUSS_LEGENDRE_5};
use crate::spatial::DiscreteNorms;
use crate::stepper::Trajectory;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

impl IdentityCheck {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        IdentityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            relative_gap: relative_gap(lhs, rhs),
        }
    }
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkReport {
    pub checks: Vec<IdentityCheck>,
}

impl RemarkReport {
    pub fn max_gap(&self) -> f64 {
        self.checks.iter().map(|c| c.relative_gap).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.relative_gap <= IDENTITY_TOLERANCE && c.lhs.is_finite() && c.rhs.is_finite())
    }

    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks
            .iter()
            .find(|c| !(c.relative_gap <= IDENTITY_TOLERANCE && c.lhs.is_finite() && c.rhs.is_finite()))
    }
}

/// Sup over `[0, T]` of `norm(hat)`, from both endpoints of every interval.
fn hat_sup<F: Fn(&[f64]) -> f64>(ip: &Interpolants, field: Field, norm: F) -> f64 {
    (0..ip.steps())
        .flat_map(|n| [0.0, 1.0].map(|s| norm(&ip.hat_on(field, n, s))))
        .fold(0.0, f64::max)
}

/// Sup of `norm(bar)` over the open intervals.
fn bar_sup<F: Fn(&[f64]) -> f64>(ip: &Interpolants, field: Field, norm: F) -> f64 {
    (0..ip.steps()).map(|n| norm(ip.bar_on(field, n))).fold(0.0, f64::max)
}

/// Sup of `norm(bar - hat)`: the difference is linear on each interval, so
/// the one-sided limits at both ends bound it.
fn bar_minus_hat_sup<F: Fn(&[f64]) -> f64>(ip: &Interpolants, field: Field, norm: F) -> f64 {
    (0..ip.steps())
        .flat_map(|n| [0.0, 1.0].map(|s| norm(&sub(ip.bar_on(field, n), &ip.hat_on(field, n, s)))))
        .fold(0.0, f64::max)
}

fn hat_slope_sup<F: Fn(&[f64]) -> f64>(ip: &Interpolants, field: Field, norm: F) -> f64 {
    (0..ip.steps()).map(|n| norm(&ip.hat_slope_on(field, n))).fold(0.0, f64::max)
}

/// Evaluates both sides of the six interpolant identities.
pub fn verify_remark_identities(traj: &Trajectory) -> RemarkReport {
    let ip = build_interpolants(traj);
    let norms: DiscreteNorms = traj.instance.norms();
    let h = traj.h();
    let v2 = |w: &[f64]| norms.v2(w);
    let v1 = |w: &[f64]| norms.v1(w);
    let hn = |w: &[f64]| norms.h(w);
    let first = &traj.states[0];
    let mut checks = Vec::new();

    checks.push(IdentityCheck::new(
        "sup phi_hat in V2 = max(|phi_0|, sup phi_bar)",
        hat_sup(&ip, Field::Phi, v2),
        norms.v2(&first.phi).max(bar_sup(&ip, Field::Phi, v2)),
    ));
    checks.push(IdentityCheck::new(
        "sup v_hat in V2 = max(|v_0|, sup v_bar)",
        hat_sup(&ip, Field::V, v2),
        norms.v2(&first.v).max(bar_sup(&ip, Field::V, v2)),
    ));
    checks.push(IdentityCheck::new(
        "sup theta_hat in V1 = max(|theta_0|, sup theta_bar)",
        hat_sup(&ip, Field::Theta, v1),
        norms.v1(&first.theta).max(bar_sup(&ip, Field::Theta, v1)),
    ));

    let phi_gap = bar_minus_hat_sup(&ip, Field::Phi, v2);
    let phi_slope = h * hat_slope_sup(&ip, Field::Phi, v2);
    let v_bar = h * bar_sup(&ip, Field::V, v2);
    checks.push(IdentityCheck::new("sup |phi_bar - phi_hat|_V2 = h sup |d phi_hat/dt|_V2", phi_gap, phi_slope));
    checks.push(IdentityCheck::new("h sup |d phi_hat/dt|_V2 = h sup |v_bar|_V2", phi_slope, v_bar));

    let v_gap = bar_minus_hat_sup(&ip, Field::V, hn);
    let v_slope = h * hat_slope_sup(&ip, Field::V, hn);
    let z_bar = h * bar_sup(&ip, Field::Z, hn);
    checks.push(IdentityCheck::new("sup |v_bar - v_hat|_H = h sup |d v_hat/dt|_H", v_gap, v_slope));
    checks.push(IdentityCheck::new("h sup |d v_hat/dt|_H = h sup |z_bar|_H", v_slope, z_bar));

    let mut lhs = 0.0;
    let mut slope_sq = 0.0;
    for n in 0..ip.steps() {
        let bar = ip.bar_on(Field::Theta, n);
        for &(x, w) in GAUSS_LEGENDRE_5.iter() {
            let s = 0.5 * (x + 1.0);
            let d = sub(bar, &ip.hat_on(Field::Theta, n, s));
            lhs += 0.5 * w * h * norms.h(&d).powi(2);
        }
        slope_sq += h * norms.h(&ip.hat_slope_on(Field::Theta, n)).powi(2);
    }
    checks.push(IdentityCheck::new(
        "|theta_bar - theta_hat|^2_L2(H) = h^2/3 |d theta_hat/dt|^2_L2(H)",
        lhs,
        h * h / 3.0 * slope_sq,
    ));
    RemarkReport { checks }
}
