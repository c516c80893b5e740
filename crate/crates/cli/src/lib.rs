//! Library half of the `kaclab` binary: config schema, runners per
//! subcommand, manifest emission, and machine-readable error records with
//! distinct exit codes.

pub mod config;
pub mod runner;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] kaclab_core::GeometryError),
    #[error(transparent)]
    Potential(#[from] kaclab_core::PotentialError),
    #[error(transparent)]
    Estimator(#[from] kaclab_core::EstimatorError),
    #[error(transparent)]
    Grid(#[from] kaclab_core::GridError),
    #[error(transparent)]
    Probe(#[from] kaclab_core::ProbeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Exit codes: 2 invalid config, 3 geometry, 4 solver non-convergence,
    /// 5 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) | CliError::Potential(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::Estimator(e) => match e {
                kaclab_core::EstimatorError::PointOutsideRegion
                | kaclab_core::EstimatorError::Geometry(_) => 3,
                _ => 2,
            },
            CliError::Grid(g) => match g {
                kaclab_core::GridError::NoConvergence => 4,
                _ => 2,
            },
            CliError::Probe(_) => 3,
            CliError::Io(_) => 5,
        }
    }

    pub fn error_record(&self) -> String {
        let kind = match self.exit_code() {
            2 => "invalid-config",
            3 => "geometry",
            4 => "solver",
            _ => "io",
        };
        format!("{{\"error\":\"{kind}\",\"message\":{}}}", serde_json::to_string(&self.to_string()).unwrap())
    }
}
