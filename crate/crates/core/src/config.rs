//! JSON run configuration and its validation into a problem instance.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::operator_core::{
    check_damping_compatibility, random_vectors, scalar_samples, LipschitzPerturbation, NonlinearPotential,
};
use crate::spatial::{
    assemble_damping, assemble_laplacian, space_time_source, zero_source, BoundaryCondition, DampingKind, Grid,
    ProblemInstance, SourceFn,
};
use crate::stepper::SchemeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    /// Dirichlet temperature, Neumann order parameter, `B = I`.
    P1,
    /// Dirichlet for both fields, `B = -Laplacian`.
    P2,
    #[serde(rename = "custom")]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPreset {
    /// `beta(r) = d1 r^3`
    Cubic { d1: f64 },
    /// `beta(r) = sum_k c_k r^k`, degree at most 3
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiPreset {
    Zero,
    /// `pi(r) = -d2 r`
    Linear { d2: f64 },
    /// `pi(r) = c0 + c1 r`
    Polynomial { coefficients: Vec<f64> },
}

/// Initial data; shapes use `x / length` on each axis and multiply across
/// axes in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    Zero,
    Constant { value: f64 },
    Sine { amplitude: f64, mode: u32 },
    Cosine { amplitude: f64, mode: u32 },
    Nodal { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    Zero,
    Constant { value: f64 },
    /// `amplitude * prod sin(mode pi x / length) * cos(omega t)`
    Sine { amplitude: f64, mode: u32, omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub linear_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = SchemeConfig::new(1.0, 1, 1.0, 0.0);
        Tolerances {
            newton_tol: d.newton_tol,
            newton_max_iter: d.newton_max_iter,
            fp_tol: d.fp_tol,
            fp_max_iter: d.fp_max_iter,
            linear_tol: d.linear_tol,
        }
    }
}

fn default_length() -> f64 {
    1.0
}

fn default_dimension() -> usize {
    1
}

fn default_sweep() -> Vec<usize> {
    vec![16, 32, 64, 128, 256]
}

fn default_reference() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// Required for `custom` problems, ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc_theta: Option<BoundaryCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc_phi: Option<BoundaryCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<DampingKind>,
    #[serde(default = "default_length")]
    pub domain_length: f64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub nodes: usize,
    pub final_time: f64,
    pub steps: usize,
    #[serde(default = "default_sweep")]
    pub sweep_steps: Vec<usize>,
    #[serde(default = "default_reference")]
    pub reference_steps: usize,
    pub beta: BetaPreset,
    pub pi: PiPreset,
    pub theta0: InitialPreset,
    pub phi0: InitialPreset,
    pub v0: InitialPreset,
    #[serde(default = "default_source")]
    pub source: SourcePreset,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_source() -> SourcePreset {
    SourcePreset::Zero
}

/// Everything besides the instance and scheme settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub sweep_steps: Vec<usize>,
    pub reference_steps: usize,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse configuration: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    fn boundary(&self) -> Result<(BoundaryCondition, BoundaryCondition, DampingKind)> {
        use BoundaryCondition::*;
        match self.problem {
            ProblemKind::P1 => Ok((Dirichlet, Neumann, DampingKind::Identity)),
            ProblemKind::P2 => Ok((Dirichlet, Dirichlet, DampingKind::Laplacian)),
            ProblemKind::Custom => match (self.bc_theta, self.bc_phi, self.damping) {
                (Some(t), Some(p), Some(d)) => Ok((t, p, d)),
                _ => Err(Error::Config(
                    "custom problems need bc_theta, bc_phi and damping".into(),
                )),
            },
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dimension, self.nodes, self.domain_length)
    }

    pub fn potential(&self) -> Result<NonlinearPotential> {
        match &self.beta {
            BetaPreset::Cubic { d1 } => {
                if !(*d1 >= 0.0) {
                    return Err(Error::hypothesis(
                        Hypothesis::BetaMonotone,
                        format!("cubic beta needs d1 >= 0, got {d1}"),
                    ));
                }
                Ok(NonlinearPotential::cubic(*d1))
            }
            BetaPreset::Polynomial { coefficients } => NonlinearPotential::polynomial(coefficients),
        }
    }

    pub fn perturbation(&self) -> Result<LipschitzPerturbation> {
        match &self.pi {
            PiPreset::Zero => Ok(LipschitzPerturbation::zero()),
            PiPreset::Linear { d2 } => Ok(LipschitzPerturbation::affine(0.0, -d2)),
            PiPreset::Polynomial { coefficients } => {
                let mut c = coefficients.clone();
                while c.len() > 2 && *c.last().unwrap() == 0.0 {
                    c.pop();
                }
                if c.len() > 2 {
                    return Err(Error::hypothesis(
                        Hypothesis::PerturbationLipschitz,
                        format!("polynomial pi of degree {} is not globally Lipschitz", c.len() - 1),
                    ));
                }
                let c0 = c.first().copied().unwrap_or(0.0);
                let c1 = c.get(1).copied().unwrap_or(0.0);
                Ok(LipschitzPerturbation::affine(c0, c1))
            }
        }
    }

    pub fn scheme_config(&self, c_l: f64, lipschitz: f64) -> SchemeConfig {
        let t = &self.tolerances;
        SchemeConfig {
            final_time: self.final_time,
            steps: self.steps,
            newton_tol: t.newton_tol,
            newton_max_iter: t.newton_max_iter,
            fp_tol: t.fp_tol,
            fp_max_iter: t.fp_max_iter,
            linear_tol: t.linear_tol,
            c_l,
            lipschitz,
        }
    }
}

fn shape(grid: &Grid, length: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.sample(|x| x.iter().map(|&xi| f(xi / length)).product())
}

fn sample_initial(preset: &InitialPreset, grid: &Grid, length: f64, what: &str) -> Result<Vec<f64>> {
    Ok(match preset {
        InitialPreset::Zero => vec![0.0; grid.node_count()],
        InitialPreset::Constant { value } => vec![*value; grid.node_count()],
        InitialPreset::Sine { amplitude, mode } => {
            let k = *mode as f64 * PI;
            shape(grid, length, |s| (k * s).sin()).into_iter().map(|v| amplitude * v).collect()
        }
        InitialPreset::Cosine { amplitude, mode } => {
            let k = *mode as f64 * PI;
            shape(grid, length, |s| (k * s).cos()).into_iter().map(|v| amplitude * v).collect()
        }
        InitialPreset::Nodal { values } => {
            if values.len() != grid.node_count() {
                return Err(Error::hypothesis(
                    Hypothesis::InitialData,
                    format!("{what} lists {} values for {} nodes", values.len(), grid.node_count()),
                ));
            }
            values.clone()
        }
    })
}

fn build_source(preset: &SourcePreset, grid: &Grid, length: f64) -> SourceFn {
    match preset {
        SourcePreset::Zero => zero_source(grid.node_count()),
        SourcePreset::Constant { value } => {
            let v = *value;
            space_time_source(grid, move |_, _| v)
        }
        SourcePreset::Sine { amplitude, mode, omega } => {
            let (a, k, w) = (*amplitude, *mode as f64 * PI, *omega);
            space_time_source(grid, move |x, t| {
                a * x.iter().map(|&xi| (k * xi / length).sin()).product::<f64>() * (w * t).cos()
            })
        }
    }
}

const CHECK_SAMPLES: usize = 100;
const OPERATOR_TOLERANCE: f64 = 1e-10;

/// Runs every structural check on an instance: monotone and growth-bounded
/// `beta`, Lipschitz `pi`, symmetric monotone operators and damping
/// compatibility. Returns the first violation.
pub fn validate_instance(instance: &ProblemInstance, seed: u64) -> Result<()> {
    let scalars = scalar_samples(10.0, 1001);
    instance.potential.check_monotone(&scalars)?;
    instance.potential.check_growth(&scalars)?;
    instance.perturbation.check_lipschitz(&scalar_samples(10.0, 201))?;
    let grid = &instance.grid;
    let a1 = assemble_laplacian(grid, instance.bc_theta)?;
    let a2 = assemble_laplacian(grid, instance.bc_phi)?;
    let b = assemble_damping(instance)?;
    for (op, name) in [(&a1, "A1"), (&a2, "A2"), (&b, "B")] {
        let samples = random_vectors(op.dim(), CHECK_SAMPLES, seed);
        let check = op.check_symmetry_and_monotonicity(&samples)?;
        if !check.passes(OPERATOR_TOLERANCE) {
            return Err(Error::hypothesis(
                Hypothesis::OperatorMonotone,
                format!("{name}: symmetry gap {:e}, smallest normalized form {:e}", check.max_symmetry_gap, check.min_normalized_form),
            ));
        }
    }
    let samples = random_vectors(a2.dim(), CHECK_SAMPLES, seed ^ 0x9e37);
    let report = check_damping_compatibility(&b, &a2, &samples)?;
    if !report.passed {
        return Err(Error::hypothesis(
            Hypothesis::DampingCompatibility,
            format!(
                "(Bw, A2 w) reaches {:e}, cross-symmetry gap {:e}",
                report.worst_positivity, report.worst_cross_symmetry
            ),
        ));
    }
    Ok(())
}

/// Builds the instance described by `config` without structural checks.
pub fn build_instance(config: &RunConfig) -> Result<ProblemInstance> {
    let (bc_theta, bc_phi, damping) = config.boundary()?;
    let grid = config.grid()?;
    let len = config.domain_length;
    ProblemInstance::new(
        grid.clone(),
        bc_theta,
        bc_phi,
        damping,
        config.potential()?,
        config.perturbation()?,
        sample_initial(&config.theta0, &grid, len, "theta0")?,
        sample_initial(&config.phi0, &grid, len, "phi0")?,
        sample_initial(&config.v0, &grid, len, "v0")?,
        build_source(&config.source, &grid, len),
    )
}

/// Parses, builds and validates; the scheme config is checked for the
/// single-run step count and every sweep step count.
pub fn resolve(config: &RunConfig) -> Result<(ProblemInstance, SchemeConfig, RunPlan)> {
    let instance = build_instance(config)?;
    validate_instance(&instance, config.seed)?;
    let scheme = config.scheme_config(instance.inertia_constant(), instance.perturbation.lipschitz_constant);
    scheme.validate()?;
    for &n in config.sweep_steps.iter().chain(std::iter::once(&config.reference_steps)) {
        SchemeConfig { steps: n, ..scheme.clone() }.validate()?;
        if !config.reference_steps.is_multiple_of(n) {
            return Err(Error::Config(format!(
                "sweep step count {n} does not divide reference_steps = {}",
                config.reference_steps
            )));
        }
    }
    let plan = RunPlan {
        sweep_steps: config.sweep_steps.clone(),
        reference_steps: config.reference_steps,
        output_dir: config.output_dir.clone(),
        seed: config.seed,
    };
    Ok((instance, scheme, plan))
}

pub fn load_config(path: &Path) -> Result<(ProblemInstance, SchemeConfig, RunPlan)> {
    resolve(&RunConfig::from_path(path)?)
}

/// The default configurations shipped in `configs/`.
pub fn default_config(problem: ProblemKind) -> RunConfig {
    let (phi0, v0) = match problem {
        ProblemKind::P2 => (
            InitialPreset::Sine { amplitude: 1.0, mode: 1 },
            InitialPreset::Sine { amplitude: -1.0, mode: 1 },
        ),
        _ => (
            InitialPreset::Cosine { amplitude: 1.0, mode: 1 },
            InitialPreset::Cosine { amplitude: -1.0, mode: 1 },
        ),
    };
    RunConfig {
        problem,
        bc_theta: None,
        bc_phi: None,
        damping: None,
        domain_length: 1.0,
        dimension: 1,
        nodes: 65,
        final_time: 1.0,
        steps: 64,
        sweep_steps: default_sweep(),
        reference_steps: default_reference(),
        beta: BetaPreset::Cubic { d1: 1.0 },
        pi: PiPreset::Linear { d2: 1.0 },
        theta0: InitialPreset::Sine { amplitude: 1.0, mode: 1 },
        phi0,
        v0,
        source: SourcePreset::Zero,
        tolerances: Tolerances::default(),
        output_dir: None,
        seed: 0,
    }
}
