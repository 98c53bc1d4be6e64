//! Simulator and benchmark toolkit for adaptive Bayesian qubit frequency
//! estimation.
//!
//! The crate provides a sequential Monte Carlo particle filter with Liu--West
//! resampling ([`smc`]), the Ramsey-type measurement models ([`model`]), four
//! experiment-design heuristics behind one interface ([`heuristics`]), a
//! minimal multilayer perceptron used as a trainable heuristic ([`nn`]),
//! episodic estimation environments ([`env`]), a cross-entropy-method trainer
//! ([`cem`]), and a benchmark harness for Bayes-risk curves, lower bounds,
//! design histograms, and credible regions ([`eval`]).

pub mod cem;
pub mod env;
pub mod eval;
pub mod heuristics;
pub mod model;
pub mod nn;
mod quad;
pub mod rng;
pub mod smc;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The posterior has no usable probability mass (e.g. total likelihood
    /// zero, or a collapsed filter where an operation needs spread).
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),
    #[error("resample failure: {0}")]
    ResampleFailure(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
