//! Discrete energy bookkeeping.
//!
//! Testing the order-parameter equation with `phi_{n+1} - phi_n` and the
//! temperature equation with `h theta_{n+1}` gives, per step,
//!
//! ```text
//! 1/2 (|L^1/2 v_{n+1}|^2 - |L^1/2 v_n|^2 + |L^1/2 (v_{n+1} - v_n)|^2) + h |B^1/2 v_{n+1}|^2
//! + 1/2 (<A2 phi_{n+1}, phi_{n+1}> - <A2 phi_n, phi_n> + <A2 dphi, dphi>)
//! + 1/2 (|phi_{n+1}|^2 - |phi_n|^2 + |dphi|^2) + i(phi_{n+1}) - i(phi_n)
//! + 1/2 (|theta_{n+1}|^2 - |theta_n|^2 + |dtheta|^2) + h (A1 theta_{n+1}, theta_{n+1})
//!   = h (f_{n+1}, theta_{n+1}) - h (pi(phi_{n+1}), v_{n+1}) + h (phi_{n+1}, v_{n+1}) - gap_n
//! ```
//!
//! where `gap_n = (beta(phi_{n+1}), dphi) - (i(phi_{n+1}) - i(phi_n)) >= 0` by
//! convexity of the primitive. The ledger evaluates every term, checks the
//! resulting inequality up to the measured scheme residuals, and collects the
//! sup/sum quantities that stay bounded as `h -> 0`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::sub;
use crate::spatial::DiscreteNorms;
use crate::stepper::{SchemeOperators, Trajectory};

/// Allowed max/min ratio of a bounded quantity across an `h` sweep.
pub const UNIFORMITY_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEnergy {
    pub lhs: f64,
    pub rhs: f64,
    pub convexity_gap: f64,
    /// `lhs - rhs + gap`; zero for an exact solve.
    pub identity_defect: f64,
    /// Bound on the defect from the step's scheme residuals and rounding.
    pub tolerance: f64,
}

impl StepEnergy {
    pub fn inequality_holds(&self) -> bool {
        self.lhs <= self.rhs + self.tolerance && self.identity_defect.abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeTerm {
    pub step: usize,
    pub term: String,
    pub value: f64,
}

/// Which estimate a bounded quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Quantities controlled by the basic energy estimate.
    Energy,
    /// Time-derivative and `V`-norm bounds that need compatible data.
    Regularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundQuantity {
    pub name: String,
    pub kind: BoundKind,
    pub value: f64,
}

/// Per-`m` values (`m = 0..=N`); the `*_sum` entries accumulate over
/// `n < m`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub h: f64,
    pub l_v_sq: Vec<f64>,
    pub b_v_sum: Vec<f64>,
    pub a2_phi: Vec<f64>,
    pub phi_sq: Vec<f64>,
    pub i_phi: Vec<f64>,
    pub theta_sq: Vec<f64>,
    pub theta_v1_sum: Vec<f64>,
    pub dtheta_sum: Vec<f64>,
    pub dv_sum: Vec<f64>,
    pub a2_dphi_sum: Vec<f64>,
    pub dphi_sum: Vec<f64>,
    pub a1_theta_sum: Vec<f64>,
    pub steps: Vec<StepEnergy>,
    pub negative_terms: Vec<NegativeTerm>,
    /// Quantities bounded independently of `h`, normalized so that none of
    /// them vanishes as `h -> 0`.
    pub bounds: Vec<BoundQuantity>,
}

impl EnergyLedger {
    fn columns(&self) -> [(&'static str, &Vec<f64>); 12] {
        [
            ("|L^1/2 v_m|^2", &self.l_v_sq),
            ("h sum |B^1/2 v|^2", &self.b_v_sum),
            ("<A2 phi_m, phi_m>", &self.a2_phi),
            ("|phi_m|^2", &self.phi_sq),
            ("i(phi_m)", &self.i_phi),
            ("|theta_m|^2", &self.theta_sq),
            ("h sum |theta|_V1^2", &self.theta_v1_sum),
            ("sum |dtheta|^2", &self.dtheta_sum),
            ("sum |L^1/2 dv|^2", &self.dv_sum),
            ("sum <A2 dphi, dphi>", &self.a2_dphi_sum),
            ("sum |dphi|^2", &self.dphi_sum),
            ("h sum (A1 theta, theta)", &self.a1_theta_sum),
        ]
    }

    /// First negative or non-finite ledger entry, if any.
    pub fn first_invalid_entry(&self) -> Option<(String, usize, f64)> {
        for (name, col) in self.columns() {
            let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (m, &v) in col.iter().enumerate() {
                if !v.is_finite() || v < -1e-12 * (1.0 + scale) {
                    return Some((name.to_string(), m, v));
                }
            }
        }
        None
    }

    pub fn first_failed_step(&self) -> Option<(usize, &StepEnergy)> {
        self.steps
            .iter()
            .enumerate()
            .find(|(_, s)| !s.inequality_holds())
            .map(|(n, s)| (n + 1, s))
    }

    pub fn passed(&self) -> bool {
        self.first_invalid_entry().is_none() && self.negative_terms.is_empty() && self.first_failed_step().is_none()
    }

    pub fn bound(&self, name: &str) -> Option<f64> {
        self.bounds.iter().find(|b| b.name == name).map(|b| b.value)
    }
}

fn cumulative(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

pub fn energy_ledger(traj: &Trajectory) -> Result<EnergyLedger> {
    let inst = &traj.instance;
    let ops = SchemeOperators::assemble(inst)?;
    let grid = &inst.grid;
    let norms: DiscreteNorms = inst.norms();
    let ts = &ops.theta_space;
    let ps = &ops.phi_space;
    let sys = &ops.phi;
    let h = traj.h();
    let states = &traj.states;
    let n_steps = traj.steps();

    let mut ledger = EnergyLedger {
        h,
        ..EnergyLedger::default()
    };
    for s in states {
        ledger.l_v_sq.push(sys.l.form(&ps.restrict(&s.v))?);
        ledger.a2_phi.push(sys.a2.form(&ps.restrict(&s.phi))?);
        ledger.phi_sq.push(grid.h_inner(&s.phi, &s.phi));
        ledger.i_phi.push(grid.primitive_integral(&sys.potential, &s.phi));
        ledger.theta_sq.push(grid.h_inner(&s.theta, &s.theta));
    }

    let mut b_terms = Vec::with_capacity(n_steps);
    let mut v1_terms = Vec::with_capacity(n_steps);
    let mut dtheta_terms = Vec::with_capacity(n_steps);
    let mut dv_terms = Vec::with_capacity(n_steps);
    let mut a2d_terms = Vec::with_capacity(n_steps);
    let mut dphi_terms = Vec::with_capacity(n_steps);
    let mut a1_terms = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let (a, b) = (&states[n], &states[n + 1]);
        let dphi = sub(&b.phi, &a.phi);
        let dv = sub(&b.v, &a.v);
        let dtheta = sub(&b.theta, &a.theta);
        let b_term = h * sys.b.form(&ps.restrict(&b.v))?;
        let dv_term = sys.l.form(&ps.restrict(&dv))?;
        let a2d_term = sys.a2.form(&ps.restrict(&dphi))?;
        let dphi_term = grid.h_inner(&dphi, &dphi);
        let dtheta_term = grid.h_inner(&dtheta, &dtheta);
        let a1_term = h * ops.a1.form(&ts.restrict(&b.theta))?;
        let gap: f64 = grid
            .weights()
            .iter()
            .zip(b.phi.iter().zip(&a.phi))
            .map(|(w, (&q, &p))| {
                w * (sys.potential.beta(q) * (q - p) - (sys.potential.beta_hat(q) - sys.potential.beta_hat(p)))
            })
            .sum();
        for (term, value) in [
            ("|L^1/2 dv|^2", dv_term),
            ("h |B^1/2 v|^2", b_term),
            ("<A2 dphi, dphi>", a2d_term),
            ("|dphi|^2", dphi_term),
            ("|dtheta|^2", dtheta_term),
            ("h (A1 theta, theta)", a1_term),
            ("convexity gap", gap),
        ] {
            // forms of monotone operators may round slightly below zero
            let floor = -1e-12 * (1.0 + dphi_term + dv_term + dtheta_term + ledger.i_phi[n + 1]);
            if !(value >= floor) {
                ledger.negative_terms.push(NegativeTerm {
                    step: n + 1,
                    term: term.to_string(),
                    value,
                });
            }
        }

        let lhs_parts = [
            0.5 * (ledger.l_v_sq[n + 1] - ledger.l_v_sq[n] + dv_term),
            b_term,
            0.5 * (ledger.a2_phi[n + 1] - ledger.a2_phi[n] + a2d_term),
            0.5 * (ledger.phi_sq[n + 1] - ledger.phi_sq[n] + dphi_term),
            ledger.i_phi[n + 1] - ledger.i_phi[n],
            0.5 * (ledger.theta_sq[n + 1] - ledger.theta_sq[n] + dtheta_term),
            a1_term,
        ];
        let pi_phi: Vec<f64> = b.phi.iter().map(|&r| sys.perturbation.pi(r)).collect();
        let rhs_parts = [
            h * grid.h_inner(&traj.sources[n], &b.theta),
            -h * grid.h_inner(&pi_phi, &b.v),
            h * grid.h_inner(&b.phi, &b.v),
        ];
        let lhs: f64 = lhs_parts.iter().sum();
        let rhs: f64 = rhs_parts.iter().sum();
        let magnitude: f64 = [
            ledger.l_v_sq[n + 1],
            ledger.l_v_sq[n],
            ledger.a2_phi[n + 1],
            ledger.a2_phi[n],
            ledger.phi_sq[n + 1],
            ledger.phi_sq[n],
            ledger.i_phi[n + 1],
            ledger.i_phi[n],
            ledger.theta_sq[n + 1],
            ledger.theta_sq[n],
        ]
        .iter()
        .chain(lhs_parts.iter())
        .chain(rhs_parts.iter())
        .map(|x| x.abs())
        .sum();
        let report = &traj.reports[n];
        let residual_bound = h
            * (report.theta_equation_residual * grid.h_norm(&b.theta)
                + report.phi_equation_residual * grid.h_norm(&b.v));
        let defect = lhs - rhs + gap;
        ledger.steps.push(StepEnergy {
            lhs,
            rhs,
            convexity_gap: gap,
            identity_defect: defect,
            tolerance: 2.0 * residual_bound + 1e-13 * magnitude,
        });

        b_terms.push(b_term);
        v1_terms.push(h * norms.v1_sq(&b.theta));
        dtheta_terms.push(dtheta_term);
        dv_terms.push(dv_term);
        a2d_terms.push(a2d_term);
        dphi_terms.push(dphi_term);
        a1_terms.push(a1_term);
    }
    ledger.b_v_sum = cumulative(&b_terms);
    ledger.theta_v1_sum = cumulative(&v1_terms);
    ledger.dtheta_sum = cumulative(&dtheta_terms);
    ledger.dv_sum = cumulative(&dv_terms);
    ledger.a2_dphi_sum = cumulative(&a2d_terms);
    ledger.dphi_sum = cumulative(&dphi_terms);
    ledger.a1_theta_sum = cumulative(&a1_terms);
    ledger.bounds = bounded_quantities(traj, &norms, &ledger);
    Ok(ledger)
}

fn bounded_quantities(traj: &Trajectory, norms: &DiscreteNorms, ledger: &EnergyLedger) -> Vec<BoundQuantity> {
    let h = traj.h();
    let states = &traj.states;
    let later = &states[1..];
    let max_of = |f: &dyn Fn(&crate::stepper::StepState) -> f64, set: &[crate::stepper::StepState]| {
        set.iter().map(f).fold(0.0, f64::max)
    };
    let sum_of = |f: &dyn Fn(&crate::stepper::StepState) -> f64| h * later.iter().map(f).sum::<f64>();
    let h_sq = |w: &[f64]| norms.h(w).powi(2);
    let n = traj.steps();
    use BoundKind::{Energy, Regularity};
    // sums that carry an explicit factor h in the energy estimate are divided
    // by it, so every entry stays of order one as h -> 0
    let values = [
        ("max |v|^2", Energy, max_of(&|s| h_sq(&s.v), states)),
        ("|z_bar|^2 L2(H)", Energy, sum_of(&|s| h_sq(&s.z))),
        ("|B^1/2 v_bar|^2 L2(H)", Energy, ledger.b_v_sum[n]),
        ("max |phi|^2 V2", Energy, max_of(&|s| norms.v2_sq(&s.phi), states)),
        ("|v_bar|^2 L2(V2)", Energy, sum_of(&|s| norms.v2_sq(&s.v))),
        ("max |theta|^2", Energy, max_of(&|s| h_sq(&s.theta), states)),
        ("|d theta_hat/dt|^2 L2(H)", Energy, ledger.dtheta_sum[n] / h),
        ("|theta_bar|^2 L2(V1)", Energy, ledger.theta_v1_sum[n]),
        (
            "max |v|^2 + |phi|^2 V2 + |theta|^2",
            Energy,
            max_of(&|s| h_sq(&s.v) + norms.v2_sq(&s.phi) + h_sq(&s.theta), states),
        ),
        ("max |theta|^2 V1", Regularity, max_of(&|s| norms.v1_sq(&s.theta), states)),
        ("max |z|^2", Regularity, max_of(&|s| h_sq(&s.z), later)),
        ("max |v|^2 V2", Regularity, max_of(&|s| norms.v2_sq(&s.v), states)),
    ];
    values
        .into_iter()
        .map(|(name, kind, value)| BoundQuantity {
            name: name.to_string(),
            kind,
            value,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityRow {
    pub name: String,
    pub kind: BoundKind,
    /// One value per ledger, in sweep order.
    pub values: Vec<f64>,
    pub ratio: f64,
    pub passed: bool,
}

/// Max/min ratio of each bounded quantity across a sweep of ledgers.
pub fn sweep_uniformity(ledgers: &[&EnergyLedger]) -> Vec<UniformityRow> {
    let Some(first) = ledgers.first() else {
        return Vec::new();
    };
    first
        .bounds
        .iter()
        .map(|b| {
            let values: Vec<f64> = ledgers.iter().map(|l| l.bound(&b.name).unwrap_or(f64::NAN)).collect();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let ratio = if max == 0.0 && min == 0.0 { 1.0 } else { max / min };
            UniformityRow {
                name: b.name.clone(),
                kind: b.kind,
                passed: ratio.is_finite() && ratio <= UNIFORMITY_RATIO,
                values,
                ratio,
            }
        })
        .collect()
}
