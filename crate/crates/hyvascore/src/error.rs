//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("finite-difference oracle failure: {0}")]
    OracleFailure(String),

    #[error("elicitation failure: {0}")]
    ElicitationFailure(String),

    #[error("all optimisation starts were infeasible")]
    InfeasibleStart,

    #[error("optimisation failure: {0}")]
    OptimizationFailure(String),

    #[error("evidence undefined: {0}")]
    EvidenceUndefined(String),

    #[error("SMIC undefined: {0}")]
    SmicUndefined(String),

    #[error("calibration error: {0}")]
    CalibrationError(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code contract for the CLI: 1 for input/configuration problems,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::DegenerateData(_) => 1,
            _ => 2,
        }
    }
}
