use thiserror::Error;

/// Errors raised by the analytic engine, the series substrate and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DuelError {
    #[error("argument outside analyticity domain: {0}")]
    Domain(String),

    #[error("series not valid to requested order: {0}")]
    SeriesNotValid(String),

    #[error("truncation order mismatch: {left:?} vs {right:?}")]
    OrderMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("not invertible as a series (constant term {0:e})")]
    NotInvertible(f64),

    #[error("truncation order exceeded: requested ({p}, {q}), available ({max_x}, {max_y})")]
    TruncationExceeded {
        p: usize,
        q: usize,
        max_x: usize,
        max_y: usize,
    },

    #[error("series divergence at given params: |zeta * Gamma(0)| = {0}")]
    SeriesDivergence(f64),

    #[error("j_max = {j_max} too small: tail bound {bound:e} exceeds 1e-12")]
    TruncationTooShort { j_max: usize, bound: f64 },

    #[error("threshold unreachable on [0, {0}]")]
    ThresholdUnreachable(f64),

    #[error("invalid observation law: {0}")]
    InvalidObservationLaw(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("derivative unstable: successive estimates {0} and {1}")]
    DerivativeUnstable(f64, f64),

    #[error("no valid samples: all {0} paths non-terminating")]
    NoValidSamples(u64),
}

pub type Result<T> = std::result::Result<T, DuelError>;
