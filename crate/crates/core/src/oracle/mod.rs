//! Verification tools: a quadrature posterior for tiny models, a
//! simulator for networks with injected bias, and coverage experiments.

mod quadrature;
mod recovery;
mod simulate;

pub use quadrature::{grid_posterior_oracle, OracleMoments, TinyModelSpec, TinyStudy, MIN_POINTS};
pub use recovery::{recovery_experiment, CoverageReport, CoverageRow};
pub use simulate::{simulate_network, SimStudy, SimTreatment, SimulatedNetwork, SimulationSpec, TruthRecord};

use thiserror::Error;

use crate::fit::FitError;
use crate::report::ReportError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Report(#[from] ReportError),
}
