use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative rate {0} for jump operator")]
    NegativeRate(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("eigensolver did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("hermiticity drift {0:.3e} exceeds tolerance after propagation")]
    HermiticityDrift(f64),

    #[error("outcome {outcome} has probability {probability:.3e} (below threshold)")]
    ZeroProbability { outcome: usize, probability: f64 },

    #[error("measurement effects do not project onto mutually orthogonal subspaces")]
    NotSubspaceOrthogonal,

    #[error("chain is not irreducible: unit eigenvalue has multiplicity {multiplicity}")]
    DegenerateStationary { multiplicity: usize },

    #[error("enumeration guard exceeded: {outcomes}^{length} sequences > {limit}")]
    EnumerationGuard {
        outcomes: usize,
        length: usize,
        limit: u64,
    },

    #[error("observed transition {from} -> {to} has model probability {probability:.3e}")]
    ImpossibleTransition {
        from: usize,
        to: usize,
        probability: f64,
    },

    #[error("estimator failed: {0}")]
    EstimatorFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} = {x}")))
    }
}
