//! Event-driven simulation and verification of asynchronous consensus for
//! continuous-time agents communicating over switching directed topologies
//! with bounded time-varying delays.
//!
//! The crate is organized around the pipeline
//! `scenario -> scheduler -> dynamics -> augmented / analysis`:
//!
//! * [`graph`] — directed weighted graphs, spanning-tree and union tests;
//! * [`matrices`] — stochastic-matrix kernels (ergodicity coefficients,
//!   SIA certification, stationary vectors, left products);
//! * [`scheduler`] — asynchronous update-time generation, event merging,
//!   and the window-size constants;
//! * [`dynamics`] — exact piecewise-exponential simulation with delayed
//!   reads and the most-recent-data strategy;
//! * [`augmented`] — the block companion-form reformulation used as an
//!   independent verification oracle;
//! * [`analysis`] — consensus detection, union/spanning-tree condition
//!   checks, group-decision-value prediction;
//! * [`scenario`] and [`cli`] — configuration, built-in scenarios, and
//!   the command-line front end.
//!
//! All numerical code is generic over the scalar type through [`Real`];
//! `f64` aliases are exported at the crate root.

pub mod analysis;
pub mod augmented;
pub mod cli;
pub mod dynamics;
pub mod graph;
pub mod matrices;
pub mod scenario;
pub mod scheduler;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Scalar type the numerical core is generic over.
pub trait Real: Float + FromPrimitive + Debug + Display + Sum + 'static {
    /// Tolerance for exact-equality style checks (row sums, event
    /// simultaneity, zero/nonzero pattern classification).
    fn pattern_tol() -> Self;
}

impl Real for f64 {
    fn pattern_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn pattern_tol() -> Self {
        1e-5
    }
}

/// Convert an `f64` constant into the working scalar type.
pub(crate) fn real<S: Real>(v: f64) -> S {
    S::from_f64(v).expect("constant representable in scalar type")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid reception: agent {agent} has no edge from {from}")]
    InvalidReception { agent: usize, from: usize },
    #[error("matrix is not stochastic: {0}")]
    NotStochastic(String),
    #[error("matrix is not certified SIA within the powering budget")]
    SiaCertification,
    #[error("stationary vector iteration did not converge")]
    StationaryNonConvergence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("evaluation time {t} beyond simulated horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error(
        "augmented window of depth {m} cannot cover a read at event {event} (lookback {lookback})"
    )]
    WindowTooSmall {
        m: usize,
        event: usize,
        lookback: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub type Graph64 = graph::DirectedWeightedGraph<f64>;
pub type StochasticMatrix64 = matrices::StochasticMatrix<f64>;
pub type Scenario64 = scenario::Scenario<f64>;
pub type RunOutput64 = dynamics::RunOutput<f64>;
