use std::fmt;

use thiserror::Error;

/// Named structural hypotheses that inputs must satisfy before a run.
///
/// Each variant corresponds to one checkable precondition on the operators,
/// the nonlinearity or the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `L` symmetric with `(Lw, w) >= c_L |w|^2`.
    InertiaCoercive,
    /// `A1`, `A2`, `B` symmetric and monotone.
    OperatorMonotone,
    /// `(Bw, A2 w) >= 0` and `(Bw, A2 z) = (Bz, A2 w)`.
    DampingCompatibility,
    /// `beta(0) = 0`, `beta` nondecreasing, primitive convex and nonnegative.
    BetaMonotone,
    /// `|beta''(r)| <= C_beta (1 + |r|)`.
    BetaGrowth,
    /// `pi` globally Lipschitz with constant `C_L`.
    PerturbationLipschitz,
    /// Initial data and source compatible with the boundary conditions.
    InitialData,
    /// Step size inside the phi-substep solvability window.
    StepWindow,
    /// Step size small enough for the theta/phi splitting to contract.
    Contraction,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::InertiaCoercive => "inertia-coercive",
            Hypothesis::OperatorMonotone => "operator-monotone",
            Hypothesis::DampingCompatibility => "damping-compatibility",
            Hypothesis::BetaMonotone => "beta-monotone",
            Hypothesis::BetaGrowth => "beta-growth",
            Hypothesis::PerturbationLipschitz => "perturbation-lipschitz",
            Hypothesis::InitialData => "initial-data",
            Hypothesis::StepWindow => "step-window",
            Hypothesis::Contraction => "contraction",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operator is not monotone: (Aw, w) = {value:e} for |w|^2 = {norm_sq:e}")]
    NotMonotone { value: f64, norm_sq: f64 },

    #[error("[{hypothesis}] {detail}")]
    Hypothesis { hypothesis: Hypothesis, detail: String },

    #[error("scalar resolvent did not converge for lambda = {lambda:e}, g = {g:e}")]
    ResolventNonConvergence { lambda: f64, g: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("nonlinear phi-substep failed: {0}")]
    NonlinearSolve(String),

    #[error("fixed-point iteration failed: {0}")]
    FixedPoint(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time {t} outside [0, {final_time}]")]
    TimeOutOfRange { t: f64, final_time: f64 },

    #[error("trajectories are not comparable: {0}")]
    Incomparable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn hypothesis(hypothesis: Hypothesis, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            hypothesis,
            detail: detail.into(),
        }
    }

    /// True for failures raised by a solver while stepping.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Step { .. }
            | Error::LinearSolve { .. }
            | Error::NonlinearSolve(_)
            | Error::FixedPoint(_)
            | Error::ResolventNonConvergence { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
