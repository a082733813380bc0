use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("flow is not on its scaled simplex: {0}")]
    NotOnSimplex(String),

    #[error("index {index} out of range (valid: 0..{len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("average cost undefined for player {player} with zero mass")]
    UndefinedAverage { player: usize },

    #[error("load {load} outside cost domain [0, {bound}]")]
    OutOfDomain { load: f64, bound: f64 },

    #[error("cost family `{0}` does not provide a derivative")]
    MissingDerivative(String),

    #[error("cost function violates convexity/monotonicity requirements: {0}")]
    InvalidCostFunction(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("root is not bracketed on [{lo}, {hi}]: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("equilibrium point does not match regime {regime}: {reason}")]
    RegimeMismatch { regime: &'static str, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
