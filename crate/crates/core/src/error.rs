use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the supported range of a special function or model.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a singular point (source point, on-boundary target).
    #[error("singularity: {0}")]
    Singular(String),

    /// Geometric precondition violated (point inside an obstacle, measurement
    /// set intersecting the scatterer, self-intersecting curve, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A linear system turned out numerically singular.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Branch continuation could not bridge a gap in the direction grid.
    #[error("continuation gap at point {point} between directions {from} and {to}: {reason}")]
    Continuation {
        point: usize,
        from: usize,
        to: usize,
        reason: String,
    },

    /// The anchoring iteration did not settle.
    #[error("anchoring did not converge (final increment {final_increment:.3e} after {} iterations)", .history.len())]
    Anchoring {
        final_increment: f64,
        history: Vec<f64>,
    },

    /// The two candidate branches could not be told apart.
    #[error("inconclusive branch selection: residual ratio {ratio:.3} below {required}")]
    Ambiguous { ratio: f64, required: f64 },

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Invalid user-facing configuration.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
