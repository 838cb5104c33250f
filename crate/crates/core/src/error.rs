use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A system or basis description violates its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{what} did not converge (residual {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },

    /// The local-mode expansion does not converge for this squeeze matrix.
    #[error("squeeze matrix is not normalizable (spectral radius {0:.6})")]
    NotNormalizable(f64),

    #[error("unknown subsystem label: {0}")]
    UnknownLabel(String),

    #[error("invalid mode partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Root bracketing found no sign change on the scanned interval.
    #[error("no sign change of the residual on [{lo:.6}, {hi:.6}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("state dimension {dim} exceeds the configured cap {cap}")]
    MemoryGuard { dim: usize, cap: usize },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
