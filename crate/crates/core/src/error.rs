use thiserror::Error;

/// Errors surfaced by the library. Every variant names the violated
/// precondition or the numerical failure so callers (and the CLI) can
/// report something actionable.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("grid mismatch: function and matrices were built on different grids")]
    GridMismatch,

    #[error("under-resolved grid: {0}")]
    UnderResolvedGrid(String),

    #[error("form is not coercive: {0}")]
    NonCoercive(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("tail estimate failure: {0}")]
    TailEstimate(String),

    #[error("dimension window violated: require 2s < N < 4s, got N={n}, s={s}")]
    DimensionWindow { n: u32, s: f64 },

    #[error("zero function: {0}")]
    ZeroFunction(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
