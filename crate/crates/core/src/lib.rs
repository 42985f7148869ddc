pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod operator_core;
pub mod output;
pub mod spatial;
pub mod stepper;

pub use error::{Error, Hypothesis, Result};
pub use config::{load_config, RunConfig, RunPlan};
