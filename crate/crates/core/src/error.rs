use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate level-function gradient at {x:?} (|grad| = {norm:e})")]
    DegenerateGradient { x: [f64; 3], norm: f64 },
    #[error("zero velocity")]
    ZeroVelocity,
    #[error("ray from {x:?} never leaves the domain within the diameter bound")]
    NoExit { x: [f64; 3] },
    #[error("grazing endpoint (|cos| = {cosine:e})")]
    GrazingEndpoint { cosine: f64 },
    #[error("point is not outgoing")]
    NotOutgoing,
    #[error("sampler failed after {attempts} attempts")]
    SamplerFailure { attempts: usize },
    #[error("weight function has zero mass on the support")]
    ZeroMass,
    #[error("beta_n = {beta:e} below cutoff")]
    BetaZero { beta: f64 },
    #[error("lost mass fraction {fraction:e} exceeds tolerance")]
    LostMass { fraction: f64 },
    #[error("power iteration did not converge after {iterations} iterations (last change {change:e}, oscillation {oscillation:e})")]
    NoConvergence {
        iterations: usize,
        change: f64,
        oscillation: f64,
    },
    #[error("invariant density normalisation is not finite")]
    DivergentMass,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported initial law: {0}")]
    UnsupportedInitialLaw(String),
}

pub type Result<T> = std::result::Result<T, Error>;
