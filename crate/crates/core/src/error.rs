use crate::net::{JunctionId, LinkId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },

    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("infeasible controls at junction {junction}: {what} = {value}")]
    Infeasible {
        junction: JunctionId,
        what: &'static str,
        value: f64,
    },

    #[error("infeasible controls: {what} = {value}")]
    InfeasibleControls { what: &'static str, value: f64 },

    #[error("junction {junction}: capacity {capacity} veh/s is below antagonist saturation flow {sat_flow} veh/s")]
    NegativeRemainingCapacity {
        junction: JunctionId,
        capacity: f64,
        sat_flow: f64,
    },

    #[error("link {link} is not an approach of junction {junction}")]
    NotAnApproach { link: LinkId, junction: JunctionId },

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid LQ weights: {0}")]
    InvalidWeights(String),

    #[error("junction load must lie in [0, 1), got {0}")]
    LoadOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no route from link {from} to link {to}")]
    Unreachable { from: LinkId, to: LinkId },

    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("incompatible scenarios: {0}")]
    Incompatible(String),

    #[error("gain matrix mismatch: {0}")]
    GainMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad input rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::GridTooSmall { .. }
                | Error::InfeasibleControls { .. }
                | Error::InvalidNetwork(_)
                | Error::InvalidWeights(_)
                | Error::LoadOutOfRange(_)
                | Error::InvalidArgument(_)
                | Error::InvalidConfig(_)
                | Error::Incompatible(_)
                | Error::GainMismatch(_)
                | Error::Json(_)
        )
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
