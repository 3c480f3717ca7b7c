//! Simulation and capacity analysis for BPSK Hadamard optical communication
//! decoded by a time-multiplexed joint-detection receiver (the Green Machine).
//!
//! The crate models the full signal chain at the level of coherent-state
//! amplitudes:
//!
//! * [`codebook`] — Sylvester Hadamard matrices, BPSK Hadamard codewords, and
//!   the equivalent PPM codewords.
//! * [`optics`] — channel loss and phase drift, plus the log₂N-stage
//!   switch/delay/beamsplitter cascade that maps BPSK Hadamard codewords to
//!   PPM before photon detection.
//! * [`detection`] — stochastic click generation with detector imperfections,
//!   time-tagged event streams, and transition-matrix / mean-photon
//!   estimation.
//! * [`receivers`] — symbol-by-symbol baselines (soft homodyne, threshold
//!   homodyne with Hadamard decoding, discretized Dolinar, heterodyne upper
//!   bound) simulated under channel phase drift.
//! * [`infotheory`] — mutual information, photon information efficiency,
//!   analytic capacity bounds, the superadditivity verdict, and the empirical
//!   low-pass fit of PIE vs. drift rate.
//! * [`linkbudget`] — deep-space free-space power budgets and the
//!   advantage-region sweep.
//! * [`calibration`] — the interspersed per-stage phase scan, sine fit, and
//!   sequential compensation loop.
//! * [`exec`] — deterministic (seeded, order-independent) Monte Carlo
//!   execution, parallel via rayon when the `parallel` feature is enabled.
//!
//! All Monte Carlo entry points take an explicit master seed and produce
//! results that are byte-identical across thread counts.

pub use num_complex;
pub use rand;

pub mod calibration;
pub mod codebook;
pub mod detection;
pub mod exec;
pub mod infotheory;
pub mod linkbudget;
pub mod optics;
pub mod receivers;

/// Crate-wide error type. Variants mirror the failure classes of the public
/// operations: argument validation, state validation, estimator domain
/// errors, fit convergence, and event-stream parsing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("malformed stream at line {line}: {msg}")]
    MalformedStream { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }
}
