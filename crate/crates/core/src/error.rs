use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants fall into two families: input/validation problems and numerical
/// failures. [`Error::is_numerical`] tells them apart (the CLI maps them to
/// different exit codes).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("design column {column} of class {class} is identically zero")]
    ZeroColumn { class: usize, column: usize },

    #[error("theoretical lambda invalid: tau = {tau:.4} >= 1 (n0 too small); use the simulated rule")]
    LambdaOutOfRange { tau: f64 },

    #[error("residual norm of class {class} fell to {norm:e} (floor {floor:e}) at iteration {iteration}")]
    ResidualFloor {
        class: usize,
        iteration: usize,
        norm: f64,
        floor: f64,
    },

    #[error("restricted design of class {class} is rank deficient (rank {rank} < {cols})")]
    RankDeficient {
        class: usize,
        rank: usize,
        cols: usize,
    },

    #[error("matrix {index} is not positive definite")]
    NotPositiveDefinite { index: usize },

    #[error("block {block} could not be drawn positive definite after {attempts} attempts")]
    GeneratorExhausted { block: usize, attempts: usize },

    #[error("node fits failed: {0:?}")]
    NodeFailures(Vec<(usize, String)>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ResidualFloor { .. }
                | Error::RankDeficient { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::GeneratorExhausted { .. }
                | Error::NodeFailures(_)
                | Error::LambdaOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
