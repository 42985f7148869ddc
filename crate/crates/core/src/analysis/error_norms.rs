//! Distances between two trajectories of the same instance in the five norms
//! of the `h^{1/2}` error estimate.
//!
//! Both trajectories are compared on the union of their time grids. Between
//! consecutive union points every hat interpolant is linear and every bar
//! interpolant constant, so sup norms of hat differences are attained at union
//! points and `L^2` integrals of bar differences are exact sums.

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::interpolants::{build_interpolants, Field, Interpolants};
use crate::error::{Error, Result};
use crate::linalg::{sub, GAUSS_LEGENDRE_5};
use crate::stepper::{SchemeOperators, Trajectory};

/// Union grids finer than this many intervals are refused.
const MAX_UNION_INTERVALS: u64 = 1 << 24;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub h: f64,
    pub reference_h: f64,
    /// `sup_t |L^1/2 (v_hat - v_ref)|_H`
    pub v_sup: f64,
    /// `|B^1/2 (v_bar - v_ref)|_{L2(H)}`
    pub bv_l2: f64,
    /// `sup_t |phi_hat - phi_ref|_V2`
    pub phi_sup_v2: f64,
    /// `sup_t |theta_hat - theta_ref|_H`
    pub theta_sup: f64,
    /// `|theta_bar - theta_ref|_{L2(V1)}`
    pub theta_l2_v1: f64,
    pub composite: f64,
    /// `|f_bar - f|_{L2(H)}` of the first trajectory, reported alongside.
    pub source_error: f64,
}

impl ErrorReport {
    pub fn norms(&self) -> [f64; 5] {
        [self.v_sup, self.bv_l2, self.phi_sup_v2, self.theta_sup, self.theta_l2_v1]
    }

    pub const NORM_NAMES: [&'static str; 5] = ["v_sup_h", "bv_l2_h", "phi_sup_v2", "theta_sup_h", "theta_l2_v1"];
}

fn check_comparable(a: &Trajectory, b: &Trajectory) -> Result<()> {
    let (ia, ib) = (&a.instance, &b.instance);
    if ia.grid != ib.grid {
        return Err(Error::Incomparable("spatial grids differ".into()));
    }
    if ia.bc_theta != ib.bc_theta || ia.bc_phi != ib.bc_phi || ia.damping != ib.damping {
        return Err(Error::Incomparable("boundary conditions or damping differ".into()));
    }
    let (ta, tb) = (a.final_time(), b.final_time());
    if (ta - tb).abs() > 1e-12 * ta.abs().max(tb.abs()) {
        return Err(Error::Incomparable(format!("final times {ta} and {tb} differ")));
    }
    Ok(())
}

/// Hat value at union point `m` of a grid with `lcm` intervals.
fn hat_at(ip: &Interpolants, field: Field, m: u64, lcm: u64) -> Vec<f64> {
    let p = m * ip.steps() as u64;
    let (n, r) = (p / lcm, p % lcm);
    if r == 0 {
        ip.nodal(field, n as usize).to_vec()
    } else {
        ip.hat_on(field, n as usize, r as f64 / lcm as f64)
    }
}

/// Bar value on the union interval starting at point `m`.
fn bar_after<'a>(ip: &Interpolants<'a>, field: Field, m: u64, lcm: u64) -> &'a [f64] {
    let n = m * ip.steps() as u64 / lcm;
    ip.bar_on(field, n as usize)
}

/// Sorted union of both step grids, in units of `T / lcm`.
fn union_points(na: u64, nb: u64) -> Result<(Vec<u64>, u64)> {
    let lcm = na.lcm(&nb);
    if lcm > MAX_UNION_INTERVALS {
        return Err(Error::Incomparable(format!(
            "union of {na} and {nb} steps needs {lcm} intervals"
        )));
    }
    let mut pts: Vec<u64> = (0..=na)
        .map(|k| k * (lcm / na))
        .chain((0..=nb).map(|k| k * (lcm / nb)))
        .collect();
    pts.sort_unstable();
    pts.dedup();
    Ok((pts, lcm))
}

/// `|f_bar - f|_{L2(0,T;H)}` by five-point Gauss-Legendre per step.
pub fn source_error(traj: &Trajectory) -> f64 {
    let h = traj.h();
    let grid = &traj.instance.grid;
    let mut total = 0.0;
    for n in 0..traj.steps() {
        let bar = &traj.sources[n];
        let t0 = n as f64 * h;
        for &(x, w) in GAUSS_LEGENDRE_5.iter() {
            let t = t0 + 0.5 * h * (x + 1.0);
            let d = sub(bar, &(traj.instance.source)(t));
            total += 0.5 * h * w * grid.h_inner(&d, &d);
        }
    }
    total.sqrt()
}

/// Error of `traj` measured against `reference` standing in for the exact
/// solution.
pub fn error_norms(traj: &Trajectory, reference: &Trajectory) -> Result<ErrorReport> {
    check_comparable(traj, reference)?;
    let ops = SchemeOperators::assemble(&traj.instance)?;
    let norms = traj.instance.norms();
    let ps = &ops.phi_space;
    let (a, b) = (build_interpolants(traj), build_interpolants(reference));
    let (points, lcm) = union_points(a.steps() as u64, b.steps() as u64)?;
    let dt = traj.final_time() / lcm as f64;

    let mut report = ErrorReport {
        h: traj.h(),
        reference_h: reference.h(),
        source_error: source_error(traj),
        ..ErrorReport::default()
    };
    for &m in &points {
        let dv = sub(&hat_at(&a, Field::V, m, lcm), &hat_at(&b, Field::V, m, lcm));
        report.v_sup = report.v_sup.max(ops.phi.l.form(&ps.restrict(&dv))?.max(0.0).sqrt());
        let dphi = sub(&hat_at(&a, Field::Phi, m, lcm), &hat_at(&b, Field::Phi, m, lcm));
        report.phi_sup_v2 = report.phi_sup_v2.max(norms.v2(&dphi));
        let dtheta = sub(&hat_at(&a, Field::Theta, m, lcm), &hat_at(&b, Field::Theta, m, lcm));
        report.theta_sup = report.theta_sup.max(norms.h(&dtheta));
    }
    let mut bv_sq = 0.0;
    let mut theta_sq = 0.0;
    for pair in points.windows(2) {
        let len = (pair[1] - pair[0]) as f64 * dt;
        let m = pair[0];
        let dv = sub(bar_after(&a, Field::V, m, lcm), bar_after(&b, Field::V, m, lcm));
        bv_sq += len * ops.phi.b.form(&ps.restrict(&dv))?.max(0.0);
        let dtheta = sub(bar_after(&a, Field::Theta, m, lcm), bar_after(&b, Field::Theta, m, lcm));
        theta_sq += len * norms.v1_sq(&dtheta);
    }
    report.bv_l2 = bv_sq.sqrt();
    report.theta_l2_v1 = theta_sq.sqrt();
    report.composite = report.norms().iter().sum();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_core::{LipschitzPerturbation, NonlinearPotential};
    use crate::spatial::{space_time_source, Grid, ProblemInstance};
    use crate::stepper::{advance_trajectory, SchemeConfig};
    use std::f64::consts::PI;

    fn instance(nodes: usize) -> ProblemInstance {
        let g = Grid::line(nodes, 1.0).unwrap();
        ProblemInstance::p1(
            g.clone(),
            NonlinearPotential::cubic(1.0),
            LipschitzPerturbation::affine(0.0, -1.0),
            g.sample(|x| (PI * x[0]).sin()),
            g.sample(|x| (PI * x[0]).cos()),
            g.sample(|x| 0.5 * (2.0 * PI * x[0]).cos()),
            space_time_source(&g, |x, t| t * (PI * x[0]).sin()),
        )
        .unwrap()
    }

    #[test]
    fn union_grid() {
        let (pts, lcm) = union_points(2, 3).unwrap();
        assert_eq!(lcm, 6);
        assert_eq!(pts, vec![0, 2, 3, 4, 6]);
        let (pts, lcm) = union_points(4, 16).unwrap();
        assert_eq!((pts.len(), lcm), (17, 16));
        assert!(union_points(1 << 13, (1 << 13) + 1).is_err());
    }

    #[test]
    fn self_comparison_is_zero_and_swap_is_symmetric() {
        let inst = instance(9);
        let a = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 0.5, 4)).unwrap();
        let b = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 0.5, 12)).unwrap();
        let zero = error_norms(&a, &a).unwrap();
        assert_eq!(zero.norms(), [0.0; 5]);
        assert_eq!(zero.composite, 0.0);
        let ab = error_norms(&a, &b).unwrap();
        let ba = error_norms(&b, &a).unwrap();
        assert!(ab.composite > 0.0);
        assert!((ab.composite - ba.composite).abs() <= 1e-12 * ab.composite);
    }

    #[test]
    fn source_error_of_linear_in_time_source() {
        // f = t s(x): the step average misses by (t - t_mid) s, whose square
        // integrates to N * h^3 / 12 * |s|^2
        let inst = instance(9);
        let traj = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 0.5, 4)).unwrap();
        let s = inst.grid.sample(|x| (PI * x[0]).sin());
        let h: f64 = 0.125;
        let expected = (4.0 * h.powi(3) / 12.0).sqrt() * inst.grid.h_norm(&s);
        assert!((source_error(&traj) - expected).abs() < 1e-14);
    }

    #[test]
    fn rejects_different_grids() {
        let a = instance(9);
        let b = instance(11);
        let ta = advance_trajectory(&a, &SchemeConfig::for_instance(&a, 0.5, 4)).unwrap();
        let tb = advance_trajectory(&b, &SchemeConfig::for_instance(&b, 0.5, 4)).unwrap();
        assert!(matches!(error_norms(&ta, &tb), Err(Error::Incomparable(_))));
    }
}
