use thiserror::Error;

/// Failures are split into domain errors (bad input, unreachable indices)
/// and numerical failures (non-convergence, integration trouble); the CLI
/// maps them to exit codes 1 and 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system {0:?} (expected s1, s2, r19 or r20)")]
    UnknownSystem(String),
    #[error("x = {x} is outside the domain of {system}")]
    BadX { system: String, x: f64 },
    #[error("h = {h} is not inside any period annulus of {system}")]
    OutsideAnnulus { system: String, h: f64 },
    #[error("h = {h} is too close to the annulus boundary {boundary} (relative gap below {tol:e})")]
    NearBoundary { h: f64, boundary: f64, tol: f64 },
    #[error("integral index {index} is not reachable for {system}")]
    Unreachable { system: String, index: String },
    #[error("recurrence {rule} has a vanishing pivot at {index}")]
    ZeroPivot { rule: &'static str, index: String },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("quadrature failed to converge (error estimate {error:e} after {intervals} subintervals)")]
    Quadrature { error: f64, intervals: usize },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Quadrature { .. }
            | Error::Integration(_)
            | Error::Numerical(_)
            | Error::Degenerate(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
