//! Finite-difference spatial discretization on uniform 1D grids and 2D
//! tensor-product grids over `[0, l]^d`.
//!
//! All fields are stored as full nodal vectors. A field with homogeneous
//! Dirichlet conditions has its boundary nodes removed from the unknown set
//! (they are identically zero); a Neumann field keeps every node and uses a
//! mirrored ghost node at the boundary. Inner products use trapezoidal
//! weights, which makes every assembled Laplacian symmetric in the weighted
//! inner product and turns summation by parts into an exact identity.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{weighted_dot, CsrMatrix};
use crate::operator_core::{LinearOperatorSpec, LipschitzPerturbation, NonlinearPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingKind {
    /// `B = I`
    Identity,
    /// `B = -Laplacian` with the phi boundary condition
    Laplacian,
}

/// Uniform grid on `[0, length]^dimension`, node index `i + n j` in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    nodes_per_axis: usize,
    length: f64,
    spacing: f64,
    axis_weights: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(dimension: usize, nodes_per_axis: usize, length: f64) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dimension} not in {{1, 2}}")));
        }
        if nodes_per_axis < 2 {
            return Err(Error::InvalidGrid(format!("{nodes_per_axis} nodes per axis")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("domain length {length}")));
        }
        let spacing = length / (nodes_per_axis - 1) as f64;
        let axis_weights: Vec<f64> = (0..nodes_per_axis)
            .map(|i| {
                if i == 0 || i + 1 == nodes_per_axis {
                    0.5 * spacing
                } else {
                    spacing
                }
            })
            .collect();
        let weights = if dimension == 1 {
            axis_weights.clone()
        } else {
            let mut w = Vec::with_capacity(nodes_per_axis * nodes_per_axis);
            for wy in &axis_weights {
                for wx in &axis_weights {
                    w.push(wx * wy);
                }
            }
            w
        };
        Ok(Grid {
            dimension,
            nodes_per_axis,
            length,
            spacing,
            axis_weights,
            weights,
        })
    }

    pub fn line(nodes: usize, length: f64) -> Result<Self> {
        Self::new(1, nodes, length)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Trapezoidal quadrature weights of the full nodal space.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn measure(&self) -> f64 {
        self.length.powi(self.dimension as i32)
    }

    fn axis_indices(&self, node: usize) -> [usize; 2] {
        let n = self.nodes_per_axis;
        if self.dimension == 1 {
            [node, 0]
        } else {
            [node % n, node / n]
        }
    }

    fn node_index(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.nodes_per_axis * idx[1]
    }

    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        let idx = self.axis_indices(node);
        (0..self.dimension).map(|a| idx[a] as f64 * self.spacing).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.axis_indices(node);
        let last = self.nodes_per_axis - 1;
        (0..self.dimension).any(|a| idx[a] == 0 || idx[a] == last)
    }

    pub fn h_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_dot(&self.weights, a, b)
    }

    pub fn h_norm(&self, a: &[f64]) -> f64 {
        self.h_inner(a, a).max(0.0).sqrt()
    }

    /// Pointwise evaluation of `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.node_count()).map(|k| f(&self.coordinates(k))).collect()
    }

    /// `sum_edges (w_p - w_q)^2 / dx` times the trapezoid weights of the
    /// remaining axes; the nodal vector must already respect its boundary
    /// condition.
    pub fn gradient_seminorm_sq(&self, w: &[f64]) -> f64 {
        let n = self.nodes_per_axis;
        let dx = self.spacing;
        let mut total = 0.0;
        if self.dimension == 1 {
            for i in 0..n - 1 {
                let d = w[i + 1] - w[i];
                total += d * d / dx;
            }
            return total;
        }
        for j in 0..n {
            for i in 0..n - 1 {
                let d = w[self.node_index([i + 1, j])] - w[self.node_index([i, j])];
                total += d * d / dx * self.axis_weights[j];
            }
        }
        for j in 0..n - 1 {
            for i in 0..n {
                let d = w[self.node_index([i, j + 1])] - w[self.node_index([i, j])];
                total += d * d / dx * self.axis_weights[i];
            }
        }
        total
    }

    /// `i(w) = int beta_hat(w)` with the same trapezoidal weights.
    pub fn primitive_integral(&self, potential: &NonlinearPotential, w: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(w)
            .map(|(wt, &x)| wt * potential.beta_hat(x))
            .sum()
    }
}

/// Unknown set of one field: all nodes for Neumann, interior nodes for
/// Dirichlet.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpace {
    bc: BoundaryCondition,
    node_count: usize,
    unknowns: Vec<usize>,
    weights: Vec<f64>,
}

impl FieldSpace {
    pub fn new(grid: &Grid, bc: BoundaryCondition) -> Self {
        let unknowns: Vec<usize> = (0..grid.node_count())
            .filter(|&k| bc == BoundaryCondition::Neumann || !grid.is_boundary(k))
            .collect();
        let weights = unknowns.iter().map(|&k| grid.weights()[k]).collect();
        FieldSpace {
            bc,
            node_count: grid.node_count(),
            unknowns,
            weights,
        }
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.unknowns.iter().map(|&k| full[k]).collect()
    }

    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_count];
        for (&k, &v) in self.unknowns.iter().zip(reduced) {
            full[k] = v;
        }
        full
    }

    /// Zeroes the eliminated nodes, the weighted-orthogonal projection onto
    /// the field's subspace.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.extend(&self.restrict(full))
    }
}

/// `-Laplacian` with the second-order stencil, acting on the unknowns of
/// `FieldSpace::new(grid, bc)`.
pub fn assemble_laplacian(grid: &Grid, bc: BoundaryCondition) -> Result<LinearOperatorSpec> {
    let n = grid.nodes_per_axis();
    if n < 3 {
        return Err(Error::InvalidGrid(format!(
            "Laplacian assembly needs at least 3 nodes per axis, got {n}"
        )));
    }
    let space = FieldSpace::new(grid, bc);
    let mut position = vec![usize::MAX; grid.node_count()];
    for (row, &k) in space.unknowns.iter().enumerate() {
        position[k] = row;
    }
    let inv_dx2 = 1.0 / (grid.spacing() * grid.spacing());
    let last = n - 1;
    let mut triplets = Vec::with_capacity(space.dim() * (1 + 2 * grid.dimension()));
    for (row, &k) in space.unknowns.iter().enumerate() {
        let idx = grid.axis_indices(k);
        for axis in 0..grid.dimension() {
            triplets.push((row, row, 2.0 * inv_dx2));
            let i = idx[axis];
            // neighbours along this axis; a missing one is mirrored
            let lower = if i > 0 { Some(i - 1) } else { None };
            let upper = if i < last { Some(i + 1) } else { None };
            for (nb, mirror) in [(lower, upper), (upper, lower)] {
                let target = match nb {
                    Some(t) => t,
                    None => mirror.expect("grid has at least 3 nodes per axis"),
                };
                let mut nidx = idx;
                nidx[axis] = target;
                let col = position[grid.node_index(nidx)];
                if col != usize::MAX {
                    triplets.push((row, col, -inv_dx2));
                }
            }
        }
    }
    let name = match bc {
        BoundaryCondition::Dirichlet => "laplacian-dirichlet",
        BoundaryCondition::Neumann => "laplacian-neumann",
    };
    let matrix = CsrMatrix::from_triplets(space.dim(), space.dim(), triplets);
    Ok(LinearOperatorSpec::from_matrix(name, matrix, space.weights().to_vec())?.with_coercivity_estimate(48, 0x5eed))
}

/// Discrete `H`, `V1` and `V2` norms: weighted `l^2` plus the first
/// difference seminorm of the field's boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNorms {
    grid: Grid,
    theta_space: FieldSpace,
    phi_space: FieldSpace,
}

impl DiscreteNorms {
    pub fn new(grid: &Grid, bc_theta: BoundaryCondition, bc_phi: BoundaryCondition) -> Self {
        DiscreteNorms {
            grid: grid.clone(),
            theta_space: FieldSpace::new(grid, bc_theta),
            phi_space: FieldSpace::new(grid, bc_phi),
        }
    }

    pub fn h(&self, w: &[f64]) -> f64 {
        self.grid.h_norm(w)
    }

    pub fn v1(&self, w: &[f64]) -> f64 {
        self.v_sq(&self.theta_space, w).sqrt()
    }

    pub fn v2(&self, w: &[f64]) -> f64 {
        self.v_sq(&self.phi_space, w).sqrt()
    }

    pub fn v1_sq(&self, w: &[f64]) -> f64 {
        self.v_sq(&self.theta_space, w)
    }

    pub fn v2_sq(&self, w: &[f64]) -> f64 {
        self.v_sq(&self.phi_space, w)
    }

    fn v_sq(&self, space: &FieldSpace, w: &[f64]) -> f64 {
        let projected = space.project(w);
        let h2 = self.grid.h_inner(&projected, &projected);
        h2 + self.grid.gradient_seminorm_sq(&projected)
    }
}

pub type SourceFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// `f(t) = 0` on `nodes` nodes.
pub fn zero_source(nodes: usize) -> SourceFn {
    Arc::new(move |_| vec![0.0; nodes])
}

/// Nodal source from a space-time function `f(x, t)`.
pub fn space_time_source<F>(grid: &Grid, f: F) -> SourceFn
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
{
    let coords: Vec<Vec<f64>> = (0..grid.node_count()).map(|k| grid.coordinates(k)).collect();
    Arc::new(move |t| coords.iter().map(|x| f(x, t)).collect())
}

/// A concrete instance of the coupled system on a grid.
#[derive(Clone)]
pub struct ProblemInstance {
    pub grid: Grid,
    pub bc_theta: BoundaryCondition,
    pub bc_phi: BoundaryCondition,
    pub damping: DampingKind,
    pub potential: NonlinearPotential,
    pub perturbation: LipschitzPerturbation,
    pub theta0: Vec<f64>,
    pub phi0: Vec<f64>,
    pub v0: Vec<f64>,
    pub source: SourceFn,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("grid", &self.grid)
            .field("bc_theta", &self.bc_theta)
            .field("bc_phi", &self.bc_phi)
            .field("damping", &self.damping)
            .field("potential", &self.potential)
            .field("perturbation", &self.perturbation)
            .finish_non_exhaustive()
    }
}

impl ProblemInstance {
    /// Validates dimensions and boundary compatibility of the data; initial
    /// values at Dirichlet nodes within rounding of zero are set to zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        bc_theta: BoundaryCondition,
        bc_phi: BoundaryCondition,
        damping: DampingKind,
        potential: NonlinearPotential,
        perturbation: LipschitzPerturbation,
        theta0: Vec<f64>,
        phi0: Vec<f64>,
        v0: Vec<f64>,
        source: SourceFn,
    ) -> Result<Self> {
        let theta0 = compatible(&grid, bc_theta, theta0, "theta0")?;
        let phi0 = compatible(&grid, bc_phi, phi0, "phi0")?;
        let v0 = compatible(&grid, bc_phi, v0, "v0")?;
        let f0 = source(0.0);
        if f0.len() != grid.node_count() {
            return Err(Error::hypothesis(
                Hypothesis::InitialData,
                format!("source has {} values on {} nodes", f0.len(), grid.node_count()),
            ));
        }
        Ok(ProblemInstance {
            grid,
            bc_theta,
            bc_phi,
            damping,
            potential,
            perturbation,
            theta0,
            phi0,
            v0,
            source,
        })
    }

    /// Dirichlet temperature, Neumann order parameter, `B = I`.
    pub fn p1(
        grid: Grid,
        potential: NonlinearPotential,
        perturbation: LipschitzPerturbation,
        theta0: Vec<f64>,
        phi0: Vec<f64>,
        v0: Vec<f64>,
        source: SourceFn,
    ) -> Result<Self> {
        Self::new(
            grid,
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Neumann,
            DampingKind::Identity,
            potential,
            perturbation,
            theta0,
            phi0,
            v0,
            source,
        )
    }

    /// Dirichlet for both fields, `B = -Laplacian`.
    pub fn p2(
        grid: Grid,
        potential: NonlinearPotential,
        perturbation: LipschitzPerturbation,
        theta0: Vec<f64>,
        phi0: Vec<f64>,
        v0: Vec<f64>,
        source: SourceFn,
    ) -> Result<Self> {
        Self::new(
            grid,
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Dirichlet,
            DampingKind::Laplacian,
            potential,
            perturbation,
            theta0,
            phi0,
            v0,
            source,
        )
    }

    pub fn theta_space(&self) -> FieldSpace {
        FieldSpace::new(&self.grid, self.bc_theta)
    }

    pub fn phi_space(&self) -> FieldSpace {
        FieldSpace::new(&self.grid, self.bc_phi)
    }

    pub fn norms(&self) -> DiscreteNorms {
        DiscreteNorms::new(&self.grid, self.bc_theta, self.bc_phi)
    }

    /// `L = I` on the phi unknowns, so `c_L = 1`.
    pub fn inertia_constant(&self) -> f64 {
        1.0
    }
}

fn compatible(grid: &Grid, bc: BoundaryCondition, data: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if data.len() != grid.node_count() {
        return Err(Error::hypothesis(
            Hypothesis::InitialData,
            format!("{what} has {} values on {} nodes", data.len(), grid.node_count()),
        ));
    }
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::hypothesis(Hypothesis::InitialData, format!("{what} contains {bad}")));
    }
    if bc == BoundaryCondition::Neumann {
        return Ok(data);
    }
    let scale = 1.0 + data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..grid.node_count() {
        if grid.is_boundary(k) && data[k].abs() > 1e-12 * scale {
            return Err(Error::hypothesis(
                Hypothesis::InitialData,
                format!(
                    "{what} = {} at Dirichlet boundary node {:?}",
                    data[k],
                    grid.coordinates(k)
                ),
            ));
        }
    }
    Ok(FieldSpace::new(grid, bc).project(&data))
}

/// `B = I` for identity damping, otherwise the Laplacian with the phi
/// boundary condition.
pub fn assemble_damping(instance: &ProblemInstance) -> Result<LinearOperatorSpec> {
    match instance.damping {
        DampingKind::Identity => Ok(LinearOperatorSpec::identity(instance.phi_space().weights().to_vec())),
        DampingKind::Laplacian => assemble_laplacian(&instance.grid, instance.bc_phi),
    }
}
