use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-conforming discretization on interface {interface}: {detail}")]
    NonConforming { interface: usize, detail: String },

    /// A pivot collapsed while factorizing a local interior block. On a
    /// well-posed global problem this signals an internal resonance of one
    /// of the double-wide slabs.
    #[error("local resonance: pivot {pivot:.3e} at elimination step {step} (scale {scale:.3e})")]
    LocalResonance { pivot: f64, step: usize, scale: f64 },

    #[error("slab {slab} failed: {source}")]
    Slab {
        slab: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dense work too large: {what} has size {size}, cap is {cap}")]
    DenseCapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("iteration broke down: {0}")]
    Breakdown(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_slab(self, slab: usize) -> Self {
        Error::Slab {
            slab,
            source: Box::new(self),
        }
    }
}
