//! Simulation of CHSH Bell-inequality tests with polarization-entangled light
//! transmitted through turbulent-atmosphere fading channels.
//!
//! The crate models the full measurement chain: a parametric down-conversion
//! (PDC) or ideal Bell-state source, one or two fading channels described by a
//! probability distribution of the transmittance (PDT), polarization analyzers
//! with noisy on/off detectors, and the squash postprocessing of double-click
//! events. Closed-form click statistics are cross-checked against an
//! independent truncated-Fock-space simulation.
//!
//! Modules:
//! - [`numerics`]: Lambert W, modified Bessel functions, seeded multivariate
//!   Gaussian sampling.
//! - [`channels`]: transmittance models (deterministic, truncated log-normal,
//!   elliptic beam, postselected, empirical), sampling, moments, exceedance.
//! - [`photocount`]: closed-form click probabilities for PDC and Bell-state
//!   sources, with and without double-click squashing.
//! - [`chsh`]: correlation coefficients, the CHSH combination, and
//!   maximization of the Bell parameter over analyzer angles.
//! - [`fockoracle`]: brute-force validator in a truncated Fock space.
//! - [`config`]: flat key=value run configuration files.
//! - [`cli`]: scenario runners producing CSV output.
//!
//! ```
//! use atmobell::channels::{ChannelScenario, TransmittanceModel};
//! use atmobell::chsh::maximize_bell;
//! use atmobell::photocount::{DetectorParams, SourceModel};
//!
//! let scenario = ChannelScenario::Copropagating(TransmittanceModel::Deterministic(1.0));
//! let detector = DetectorParams { eta_c: 0.8, nu: 0.0 };
//! let result = maximize_bell(
//!     &SourceModel::BellState,
//!     &scenario,
//!     &detector,
//!     true,
//!     10_000,
//!     7,
//! )
//! .unwrap();
//! assert!((result.bell - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
//! ```

pub mod channels;
pub mod chsh;
pub mod cli;
pub mod config;
pub mod fockoracle;
pub mod numerics;
pub mod photocount;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a special function.
    #[error("domain error in {function}: argument {value}")]
    Domain { function: &'static str, value: f64 },
    /// A computation overflowed the representable range.
    #[error("overflow in {function}: argument {value}")]
    Overflow { function: &'static str, value: f64 },
    /// Covariance matrix is indefinite beyond the clamp tolerance.
    #[error("covariance factorization failed: eigenvalue {eigenvalue} below tolerance")]
    IndefiniteCovariance { eigenvalue: f64 },
    /// A model parameter violates its stated range.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
    /// Rejection sampling would stall: acceptance probability is too small.
    #[error("postselection feasibility below {limit:e} ({accepted} accepted of {attempts} draws)")]
    FeasibilityUnderflow {
        limit: f64,
        accepted: u64,
        attempts: u64,
    },
    /// An intermediate value became non-finite.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    /// Correlation coefficient is undefined (zero denominator).
    #[error("undefined correlation: p_same + p_different = 0")]
    UndefinedCorrelation,
    /// Fock-space cutoff too small for the requested squeezing.
    #[error("Fock cutoff {cutoff} too small: truncation tail {tail:e} exceeds {bound:e}")]
    CutoffTooSmall { cutoff: usize, tail: f64, bound: f64 },
    /// Configuration file error.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    /// I/O error while reading configuration or sample files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Derives a decorrelated sub-seed from a root seed and a stream index.
///
/// Streams are mixed with the SplitMix64 finalizer so that parallel samplers
/// with distinct stream indices produce independent sequences.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
