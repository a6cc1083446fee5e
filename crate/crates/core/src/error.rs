use thiserror::Error;

/// Error conditions shared by every module of the crate.
///
/// Variants carry enough context to name the violated inequality or the
/// offending geometric object, so callers (and the CLI) can report machine
/// readable failures without re-deriving state.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left its stated range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition (named inequality) failed; the message quotes it
    /// with the numbers that violated it.
    #[error("precondition rejected: {0}")]
    Precondition(String),

    /// A simplex was too close to degenerate for barycentric solves.
    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    /// Requested slice dimension outside the supported set {0, 1, 2}.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// The vertex nudge failed to reach general position within budget.
    #[error("nudge budget exhausted on cell {cell:?}, simplex {simplex}")]
    NudgeFailed { cell: Vec<u64>, simplex: usize },

    /// C2 gluing of the reconstructed speed profile failed.
    #[error("reconstruction failure: max C2 residual {residual:.3e} at {junction}")]
    ReconstructionFailure { junction: String, residual: f64 },

    /// A monotone inversion was queried outside the invertible range.
    #[error("range error: {0}")]
    Range(String),

    /// A numerical stage failed its a-posteriori verification.
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: String, message: String },

    /// I/O wrapper for file-facing helpers.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn numerical(stage: &str, msg: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.to_string(),
            message: msg.into(),
        }
    }
}
