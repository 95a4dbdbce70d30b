use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum DwbError {
    /// A sample window contained no samples.
    #[error("empty window")]
    EmptyWindow,

    /// Two quantile vectors were combined at different discretization levels.
    #[error("incompatible discretization: {0} vs {1}")]
    IncompatibleDiscretization(usize, usize),

    /// Vector/matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The time series is too short for the requested window.
    #[error("series shorter than window: T={len}, n={window}")]
    SeriesShorterThanWindow { len: usize, window: usize },

    /// Spectral clustering failed to produce K nonempty clusters.
    #[error("degenerate clustering: no seeding produced {0} nonempty clusters")]
    DegenerateClustering(usize),

    /// The inverse-scaling construction was requested outside its feasible range.
    #[error("construction infeasible: alpha={alpha} outside [{alpha0}, {alpha_m}]")]
    ConstructionInfeasible {
        alpha: f64,
        alpha0: f64,
        alpha_m: f64,
    },

    /// The objective became non-finite during optimization.
    #[error("diverged: objective is not finite")]
    Diverged,

    /// State matching by permutation enumeration is capped at K = 8.
    #[error("use assignment solver: K={0} exceeds the K<=8 brute-force cap")]
    UseAssignmentSolver(usize),

    /// An input value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, DwbError>;
