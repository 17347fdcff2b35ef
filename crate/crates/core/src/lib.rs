//! Explicit coupling bounds for Markov chains.
//!
//! Finite-state oracles, homogeneous and time-inhomogeneous bound evaluators,
//! a bell-variable coupling simulator, the Lipschitz autoregression example and
//! a certified simulated-annealing schedule.

pub mod annealing;
pub mod ar;
pub mod bounds;
pub mod chain;
pub mod coupling;
pub mod densities;
pub mod error;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod stats;
pub mod suites;

pub use error::{BoundsError, Result};
