//! Ergodic secrecy rates of a K-receiver broadcast wiretap channel with
//! b-bit CSI feedback per fading block.
//!
//! Each legitimate receiver quantizes its squared channel gain against a
//! shared set of reconstruction points and feeds the cell index back to the
//! transmitter over an error-free public link. The transmitter adapts rate
//! and power to the feedback under an average power constraint while an
//! eavesdropper (of known statistics, unknown realization) listens in.
//!
//! The crate computes, optimizes and Monte-Carlo-validates:
//!
//! - lower/upper bounds on the common-message secrecy capacity,
//! - lower/upper bounds on the secrecy sum-rate for independent messages,
//! - the perfect-CSI limits of both, reached as b grows.
//!
//! Module layout mirrors the pipeline: [`dist`] (fading laws and order
//! statistics) → [`quantize`] (feedback cells) → [`rates`] (the secrecy
//! expectations inside every bound) → [`opt`] (power and threshold
//! optimization) → [`bounds`] (bound assembly) → [`sim`] (block-fading
//! simulator). All values are in nats per channel use (npcu); the average
//! power budget equals the linear SNR since noise has unit variance.

pub mod bounds;
pub mod dist;
pub mod opt;
pub mod quantize;
pub mod rates;
pub mod rng;
pub mod sim;

mod quad;

pub use bounds::{BoundKind, BoundResult, SolveOptions, ThresholdMode};
pub use dist::{FadingDistribution, GainLaw};
pub use opt::{CsiPowerProfile, OptMode, PowerPolicy};
pub use quantize::Quantizer;
pub use rates::QuadratureSettings;
pub use rng::RngStream;
pub use sim::{SimConfig, SimOutcome};

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument left the domain of the operation (negative gain,
    /// probability outside [0,1), zero receiver count, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested transform is only defined for another distribution
    /// family.
    #[error("unsupported distribution family: {0}")]
    UnsupportedFamily(String),

    /// A quantizer cell carries no probability mass under the given
    /// distribution, so conditional expectations over it are undefined.
    #[error("zero-probability cell [{lo}, {hi})")]
    ZeroProbabilityCell { lo: f64, hi: f64 },

    /// Adaptive quadrature exhausted its subdivision budget. `residual` is
    /// the remaining absolute error estimate.
    #[error("quadrature did not converge: residual {residual:.3e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence { residual: f64, subdivisions: usize },

    /// A numeric solver (multiplier bisection, quantile inversion) failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The optimization problem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Inconsistent configuration (dimension mismatches and the like).
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
