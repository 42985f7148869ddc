mod common;

use std::sync::Arc;

use parhyp::analysis::{
    build_interpolants, energy_ledger, error_norms, verify_remark_identities, Field, IDENTITY_TOLERANCE,
};
use parhyp::config::ProblemKind;
use parhyp::operator_core::{LipschitzPerturbation, NonlinearPotential};
use parhyp::spatial::{zero_source, BoundaryCondition, DampingKind, Grid, ProblemInstance};
use parhyp::stepper::{advance_trajectory, SchemeConfig, StepReport, StepState, Trajectory};

fn state(step: usize, time: f64, theta: f64, nodes: usize) -> StepState {
    StepState {
        step,
        time,
        theta: vec![theta; nodes],
        phi: vec![0.0; nodes],
        v: vec![0.0; nodes],
        z: vec![0.0; nodes],
    }
}

/// Hand-built single step: theta goes from 0 to 1 on a unit domain with
/// `h = 1`.
fn single_step() -> Trajectory {
    let nodes = 3;
    let grid = Grid::line(nodes, 1.0).unwrap();
    let z = vec![0.0; nodes];
    let inst = ProblemInstance::new(
        grid,
        BoundaryCondition::Neumann,
        BoundaryCondition::Neumann,
        DampingKind::Identity,
        NonlinearPotential::zero(),
        LipschitzPerturbation::zero(),
        z.clone(),
        z.clone(),
        z,
        zero_source(nodes),
    )
    .unwrap();
    Trajectory {
        config: SchemeConfig::new(1.0, 1, 1.0, 0.0),
        instance: Arc::new(inst),
        states: vec![state(0, 0.0, 0.0, nodes), state(1, 1.0, 1.0, nodes)],
        reports: vec![StepReport::default()],
        sources: vec![vec![0.0; nodes]],
    }
}

#[test]
fn theta_gap_identity_by_hand() {
    let rep = verify_remark_identities(&single_step());
    let check = rep
        .checks
        .iter()
        .find(|c| c.name.starts_with("|theta_bar - theta_hat|^2"))
        .unwrap();
    // integral over (0, 1) of (1 - t)^2
    assert!((check.lhs - 1.0 / 3.0).abs() < 1e-15);
    assert!((check.rhs - 1.0 / 3.0).abs() < 1e-15);
    assert!(rep.passed());
}

#[test]
fn hat_is_linear_between_nodes() {
    let traj = single_step();
    let ip = build_interpolants(&traj);
    assert_eq!(ip.hat(Field::Theta, 0.5).unwrap(), vec![0.5; 3]);
    assert_eq!(ip.bar(Field::Theta, 0.25).unwrap(), vec![1.0; 3]);
    assert!(ip.hat(Field::Theta, 1.5).is_err());
}

#[test]
fn identities_hold_on_default_runs() {
    for kind in [ProblemKind::P1, ProblemKind::P2] {
        let inst = common::default_instance(kind);
        let traj = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 1.0, 32)).unwrap();
        let rep = verify_remark_identities(&traj);
        assert!(rep.max_gap() <= IDENTITY_TOLERANCE, "{:?}", rep.first_failure());
        let phi = rep.checks.iter().find(|c| c.name.starts_with("sup |phi_bar")).unwrap();
        assert!(phi.relative_gap <= 1e-12);
    }
}

#[test]
fn ledger_entries_are_nonnegative() {
    for kind in [ProblemKind::P1, ProblemKind::P2] {
        let inst = common::default_instance(kind);
        let traj = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 1.0, 32)).unwrap();
        let ledger = energy_ledger(&traj).unwrap();
        assert!(ledger.first_invalid_entry().is_none());
        assert!(ledger.negative_terms.is_empty(), "{:?}", ledger.negative_terms);
        assert!(ledger.passed());
        for w in ledger.dv_sum.windows(2).chain(ledger.b_v_sum.windows(2)) {
            assert!(w[1] >= w[0]);
        }
    }
}

#[test]
fn coarse_against_fine_reference() {
    let inst = common::default_instance(ProblemKind::P1);
    let coarse = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 1.0, 16)).unwrap();
    let fine = advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 1.0, 4096)).unwrap();
    let e = error_norms(&coarse, &fine).unwrap();
    assert!(e.composite.is_finite() && e.composite > 0.0);
    let swapped = error_norms(&fine, &coarse).unwrap();
    assert!(swapped.composite < 2.0 * e.composite && e.composite < 2.0 * swapped.composite);
    assert_eq!(error_norms(&fine, &fine).unwrap().composite, 0.0);
}
