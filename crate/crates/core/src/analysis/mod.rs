//! Diagnostics over computed trajectories.

pub mod convergence;
pub mod error_norms;
pub mod interpolants;
pub mod ledger;
pub mod remark;

pub use convergence::{convergence_study, fit_slope, ConvergenceStudy, RateRow, SlopeFit};
pub use error_norms::{error_norms, source_error, ErrorReport};
pub use interpolants::{build_interpolants, Field, Interpolants};
pub use ledger::{energy_ledger, BoundKind, BoundQuantity, sweep_uniformity, EnergyLedger, UniformityRow, UNIFORMITY_RATIO};
pub use remark::{verify_remark_identities, RemarkReport, IDENTITY_TOLERANCE};
