use thiserror::Error;

use carbon_market::carbonflow::CarbonFlowError;
use carbon_market::clearing::ClearingError;
use carbon_market::model::ModelError;
use carbon_market::scenario::ScenarioError;

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const NON_CONVERGENCE: u8 = 4;
    pub const INTERNAL: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("carbon-flow iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => code::INPUT,
            CliError::Infeasible(_) => code::INFEASIBLE,
            CliError::NonConvergence(_) => code::NON_CONVERGENCE,
            CliError::Internal(_) => code::INTERNAL,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ClearingError> for CliError {
    fn from(e: ClearingError) -> Self {
        match e {
            ClearingError::Model(m) => m.into(),
            ClearingError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<CarbonFlowError> for CliError {
    fn from(e: CarbonFlowError) -> Self {
        match e {
            CarbonFlowError::Clearing(c) => c.into(),
            CarbonFlowError::Config(_) => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// Output files that cannot be written are a usage problem (bad `--out`).
pub fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
