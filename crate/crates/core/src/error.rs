use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sparsity must lie in [0, 1), got {0}")]
    SparsityOutOfRange(f64),

    /// No finite value of the free variable reaches the requested loss.
    #[error("loss {target} is unreachable: the remaining terms already sum to {floor}")]
    UnreachableLoss { target: f64, floor: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    /// The scalar objective had a lower grid value than the bracketed minimum.
    #[error("objective is not unimodal on [{lo}, {hi}]: grid minimum {grid_min} at {grid_arg} beats {found} at {found_arg}")]
    NotUnimodal {
        lo: f64,
        hi: f64,
        grid_arg: f64,
        grid_min: f64,
        found_arg: f64,
        found: f64,
    },

    #[error("sparsity-aware RMS needs at least one kept entry")]
    EmptySupport,

    #[error("training diverged at step {step}: loss {loss} exceeds {limit}")]
    Diverged { step: usize, loss: f64, limit: f64 },

    #[error("malformed tensor file: {0}")]
    Format(String),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::SparsityOutOfRange(_) => "sparsity-out-of-range",
            Error::UnreachableLoss { .. } => "unreachable-loss",
            Error::DegenerateData(_) => "degenerate-data",
            Error::NoSolution(_) => "no-solution",
            Error::NotUnimodal { .. } => "not-unimodal",
            Error::EmptySupport => "empty-support",
            Error::Diverged { .. } => "diverged",
            Error::Format(_) => "format",
        }
    }
}

pub(crate) fn check_sparsity(s: f64) -> Result<()> {
    if s.is_finite() && (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::SparsityOutOfRange(s))
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite and positive, got {x}")))
    }
}
