use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vehicle index {index} out of range for {count} vehicles")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("vehicle 0 leads an open road and has no headway")]
    NoLeader,

    #[error("vehicle {index} overlaps its leader (gap {gap} m)")]
    Overlap { index: usize, gap: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty traffic state")]
    EmptyState,

    #[error("infeasible spacing: ring segment {segment} m cannot hold a vehicle of length {length} m plus minimum gap {min_gap} m")]
    InfeasibleSpacing {
        segment: f64,
        length: f64,
        min_gap: f64,
    },

    #[error("no equilibrium velocity in [0, {v0}] for gap {gap} m")]
    NoEquilibrium { v0: f64, gap: f64 },

    #[error("no controlled vehicle index set on the traffic state")]
    MissingControlledIndex,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("episode already finished; call reset")]
    EpisodeFinished,

    #[error("non-finite loss during update: {0}")]
    NonFiniteLoss(String),

    #[error("malformed policy file: {0}")]
    PolicyFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("gradient verification failed: {0}")]
    VerificationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
