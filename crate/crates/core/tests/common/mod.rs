#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parhyp::config::{build_instance, default_config, ProblemKind};
use parhyp::operator_core::{LipschitzPerturbation, NonlinearPotential};
use parhyp::spatial::{zero_source, BoundaryCondition, Grid, ProblemInstance};
use parhyp::stepper::StepState;

/// Dense `-Laplacian` on the unknowns of a 1D grid, written row by row from
/// the three-point stencil; a Neumann end doubles its inner neighbour.
pub fn dense_laplacian(nodes: usize, length: f64, bc: BoundaryCondition) -> DMatrix<f64> {
    let dx = length / (nodes - 1) as f64;
    let c = 1.0 / (dx * dx);
    match bc {
        BoundaryCondition::Dirichlet => {
            let m = nodes - 2;
            DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    2.0 * c
                } else if i.abs_diff(j) == 1 {
                    -c
                } else {
                    0.0
                }
            })
        }
        BoundaryCondition::Neumann => {
            let m = nodes;
            DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    2.0 * c
                } else if (i == 0 && j == 1) || (i == m - 1 && j == m - 2) {
                    -2.0 * c
                } else if i.abs_diff(j) == 1 {
                    -c
                } else {
                    0.0
                }
            })
        }
    }
}

/// Trapezoid weights of the unknowns.
pub fn dense_weights(nodes: usize, length: f64, bc: BoundaryCondition) -> Vec<f64> {
    let dx = length / (nodes - 1) as f64;
    let all: Vec<f64> = (0..nodes)
        .map(|i| if i == 0 || i == nodes - 1 { 0.5 * dx } else { dx })
        .collect();
    match bc {
        BoundaryCondition::Dirichlet => all[1..nodes - 1].to_vec(),
        BoundaryCondition::Neumann => all,
    }
}

pub fn unknown_nodes(nodes: usize, bc: BoundaryCondition) -> Vec<usize> {
    match bc {
        BoundaryCondition::Dirichlet => (1..nodes - 1).collect(),
        BoundaryCondition::Neumann => (0..nodes).collect(),
    }
}

pub fn wnorm(weights: &[f64], a: &[f64]) -> f64 {
    weights.iter().zip(a).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

/// Weighted norm of `a - b` on the given unknown nodes of two full vectors.
pub fn h_distance(weights: &[f64], idx: &[usize], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = idx.iter().map(|&k| a[k] - b[k]).collect();
    wnorm(weights, &d)
}

/// `(I + h A1)^{-1} g` by dense LU.
pub fn dense_theta_solve(a1: &DMatrix<f64>, h: f64, g: &[f64]) -> Vec<f64> {
    let m = a1.nrows();
    let sys = DMatrix::identity(m, m) + a1 * h;
    let x = sys.lu().solve(&DVector::from_column_slice(g)).expect("nonsingular");
    x.as_slice().to_vec()
}

/// Data of a 1D instance with `beta(r) = d1 r^3`, `pi(r) = -d2 r` and
/// `L = I` for the dense oracle.
pub struct DenseProblem {
    pub nodes: usize,
    pub length: f64,
    pub bc_theta: BoundaryCondition,
    pub bc_phi: BoundaryCondition,
    pub laplacian_damping: bool,
    pub d1: f64,
    pub d2: f64,
}

impl DenseProblem {
    pub fn p1(nodes: usize) -> Self {
        DenseProblem {
            nodes,
            length: 1.0,
            bc_theta: BoundaryCondition::Dirichlet,
            bc_phi: BoundaryCondition::Neumann,
            laplacian_damping: false,
            d1: 1.0,
            d2: 1.0,
        }
    }

    pub fn p2(nodes: usize) -> Self {
        DenseProblem {
            bc_phi: BoundaryCondition::Dirichlet,
            laplacian_damping: true,
            ..Self::p1(nodes)
        }
    }

    pub fn instance(&self, theta0: Vec<f64>, phi0: Vec<f64>, v0: Vec<f64>) -> ProblemInstance {
        let g = Grid::line(self.nodes, self.length).unwrap();
        let pot = NonlinearPotential::cubic(self.d1);
        let pert = LipschitzPerturbation::affine(0.0, -self.d2);
        let src = zero_source(self.nodes);
        if self.laplacian_damping {
            ProblemInstance::p2(g, pot, pert, theta0, phi0, v0, src).unwrap()
        } else {
            ProblemInstance::p1(g, pot, pert, theta0, phi0, v0, src).unwrap()
        }
    }

    pub fn theta_idx(&self) -> Vec<usize> {
        unknown_nodes(self.nodes, self.bc_theta)
    }

    pub fn phi_idx(&self) -> Vec<usize> {
        unknown_nodes(self.nodes, self.bc_phi)
    }

    pub fn theta_weights(&self) -> Vec<f64> {
        dense_weights(self.nodes, self.length, self.bc_theta)
    }

    pub fn phi_weights(&self) -> Vec<f64> {
        dense_weights(self.nodes, self.length, self.bc_phi)
    }

    /// One step solved as a single coupled system in `(theta, phi)` by
    /// Newton with dense LU, iterated until the update stalls at rounding.
    /// Returns full nodal vectors.
    pub fn monolithic_step(&self, prev: &StepState, f_next: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let ti = self.theta_idx();
        let pi_ = self.phi_idx();
        let (mt, mp) = (ti.len(), pi_.len());
        let a1 = dense_laplacian(self.nodes, self.length, self.bc_theta);
        let a2 = dense_laplacian(self.nodes, self.length, self.bc_phi);
        let b = if self.laplacian_damping {
            a2.clone()
        } else {
            DMatrix::identity(mp, mp)
        };
        // coupling: theta equation sees phi on theta unknowns and vice versa
        let p_tp = DMatrix::from_fn(mt, mp, |i, j| if ti[i] == pi_[j] { 1.0 } else { 0.0 });
        let p_pt = p_tp.transpose();
        let pick = |v: &[f64], idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&k| v[k]));
        let theta_rhs = pick(
            &(0..self.nodes)
                .map(|k| prev.theta[k] + prev.phi[k] + h * f_next[k])
                .collect::<Vec<_>>(),
            &ti,
        );
        let phi_n = pick(&prev.phi, &pi_);
        let v_n = pick(&prev.v, &pi_);
        let phi_rhs = &phi_n + &v_n * h + &b * &phi_n * h;
        let lin_t = DMatrix::identity(mt, mt) + &a1 * h;
        let lin_p = DMatrix::identity(mp, mp) + &b * h + &a2 * (h * h);

        let mut theta = pick(&prev.theta, &ti);
        let mut phi = phi_n.clone();
        for _ in 0..100 {
            let nl = phi.map(|r| self.d1 * r * r * r - self.d2 * r);
            let r1 = &lin_t * &theta + &p_tp * &phi - &theta_rhs;
            let r2 = &lin_p * &phi + nl * (h * h) - &phi_rhs - &p_pt * &theta * (h * h);
            let mut jac = DMatrix::zeros(mt + mp, mt + mp);
            jac.view_mut((0, 0), (mt, mt)).copy_from(&lin_t);
            jac.view_mut((0, mt), (mt, mp)).copy_from(&p_tp);
            jac.view_mut((mt, 0), (mp, mt)).copy_from(&(-&p_pt * (h * h)));
            let slope = DMatrix::from_diagonal(&phi.map(|r| 3.0 * self.d1 * r * r - self.d2));
            jac.view_mut((mt, mt), (mp, mp)).copy_from(&(&lin_p + slope * (h * h)));
            let mut res = DVector::zeros(mt + mp);
            res.rows_mut(0, mt).copy_from(&r1);
            res.rows_mut(mt, mp).copy_from(&r2);
            let step = jac.lu().solve(&res).expect("nonsingular Jacobian");
            theta -= step.rows(0, mt);
            phi -= step.rows(mt, mp);
            if step.norm() <= 1e-15 * (1.0 + phi.norm() + theta.norm()) {
                break;
            }
        }
        let mut theta_full = vec![0.0; self.nodes];
        let mut phi_full = vec![0.0; self.nodes];
        for (i, &k) in ti.iter().enumerate() {
            theta_full[k] = theta[i];
        }
        for (i, &k) in pi_.iter().enumerate() {
            phi_full[k] = phi[i];
        }
        (theta_full, phi_full)
    }

    /// Random state compatible with the boundary conditions.
    pub fn random_state(&self, rng: &mut ChaCha8Rng, amplitude: f64) -> StepState {
        let mut draw = |bc: BoundaryCondition| -> Vec<f64> {
            (0..self.nodes)
                .map(|k| {
                    if bc == BoundaryCondition::Dirichlet && (k == 0 || k == self.nodes - 1) {
                        0.0
                    } else {
                        amplitude * rng.gen_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let theta = draw(self.bc_theta);
        let phi = draw(self.bc_phi);
        let v = draw(self.bc_phi);
        StepState {
            step: 0,
            time: 0.0,
            theta,
            phi,
            v,
            z: vec![0.0; self.nodes],
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The 65-node sweep instances shipped as default configurations.
pub fn default_instance(kind: ProblemKind) -> ProblemInstance {
    build_instance(&default_config(kind)).unwrap()
}

pub fn smooth_p1(nodes: usize) -> ProblemInstance {
    let g = Grid::line(nodes, 1.0).unwrap();
    ProblemInstance::p1(
        g.clone(),
        NonlinearPotential::cubic(1.0),
        LipschitzPerturbation::affine(0.0, -1.0),
        g.sample(|x| (PI * x[0]).sin()),
        g.sample(|x| (PI * x[0]).cos()),
        g.sample(|x| -(PI * x[0]).cos()),
        zero_source(nodes),
    )
    .unwrap()
}
