//! Wiener chaos decomposition of the nodal length of Gaussian fields on the
//! unit 2-sphere and the flat 2-torus.
//!
//! The crate is organised bottom-up:
//!
//! - [`specfun`]: Hermite/Laguerre polynomials, chaos coefficients, the
//!   four-point diagram formula.
//! - [`geometry`]: manifolds, tangent frames, manifold and fiber quadratures,
//!   spherical moment identities.
//! - [`field`]: spectral field models, sampling, jets and jet covariances,
//!   Adler–Taylor metric, frequency and eccentricity.
//! - [`chaos`]: per-sample chaos components of the nodal measure.
//! - [`variance`]: exact variances, covariance bounds, closed forms.
//! - [`nodal`]: nodal-length Monte Carlo oracle.

pub mod chaos;
pub mod field;
pub mod geometry;
pub mod nodal;
pub mod specfun;
pub mod stats;
pub mod variance;

/// Errors raised by the public API.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degree {degree} too large (maximum {max})")]
    DegreeTooLarge { degree: u32, max: u32 },
    #[error("odd order q = {0}; only even chaos orders are supported")]
    OddOrder(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resolution {got} below minimum {min}")]
    ResolutionTooSmall { got: usize, min: usize },
    #[error("point lies on the excluded polar set; use a rotated chart")]
    AtPole,
    #[error("singular matrix")]
    Singular,
    #[error("{0} is not a sum of two squares")]
    NotSumOfTwoSquares(u64),
    #[error("degenerate field: {0} (unit variance with non-degenerate differential required)")]
    Degenerate(String),
    #[error("closed form requires a homothetic field: {0}")]
    NotHomothetic(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
