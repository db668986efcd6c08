//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("direction has invalid norm {norm}")]
    InvalidDirection { norm: f64 },

    #[error("matrix is not symmetric: |B - B^T| max entry {deviation:.3e}")]
    NonSymmetricMatrix { deviation: f64 },

    #[error("matrix is not positive definite: smallest eigenvalue {eigenvalue:.6e}")]
    NonPositiveDefinite { eigenvalue: f64 },

    #[error(
        "strict convexity check failed: margin {margin:.6e} <= floor {floor:.1e}; \
         largest admissible coefficient scale found by bisection: {max_admissible_eps:.6e}"
    )]
    ConvexityFailure {
        margin: f64,
        floor: f64,
        max_admissible_eps: f64,
    },

    #[error("dimension {got} unsupported here (need {expected})")]
    UnsupportedDimension { expected: String, got: usize },

    #[error("invalid range: {reason}")]
    InvalidRange { reason: String },

    #[error("invalid tuple size k = {k}; need k >= 2")]
    InvalidK { k: usize },

    #[error("no start converged; best residual {best_residual:.6e}")]
    ConvergenceFailure { best_residual: f64 },

    #[error(
        "ambiguous direction solve: {clusters} non-equivalent normals reach tolerance \
         (body may be nearly non-strictly-convex)"
    )]
    AmbiguityWarning { clusters: usize },

    #[error("point is not interior: membership margin {margin:.6e}")]
    NonInteriorPoint { margin: f64 },

    #[error("point is not exterior: membership margin {margin:.6e}")]
    NotExteriorPoint { margin: f64 },

    #[error("hyperplane misses the body: slack {slack:.6e}")]
    NoIntersection { slack: f64 },

    #[error("hyperplane is tangency-degenerate: slack {slack:.6e} below 1e-9")]
    TangencyDegenerate { slack: f64 },

    #[error("degenerate section: area {area:.3e} below 1e-12")]
    DegenerateSection { area: f64 },

    #[error("section tracing failed: {reason}")]
    TraceFailure { reason: String },

    #[error("invalid body descriptor: {reason}")]
    InvalidDescriptor { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
