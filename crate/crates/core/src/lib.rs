//! Stability-guaranteed direct parametrizations of continuous-time linear
//! stochastic state-space models
//!
//! ```text
//! dx = (A x + B u) dt + [F x  G u] dw,    y = C x + D u,
//! ```
//!
//! with correlated Wiener increments, together with prior distributions that
//! put all their mass on mean-square stable (and bounded-real) models,
//! SDE/moment simulation, and MCMC inference.

pub mod error;
pub mod matfound;
pub mod param;
pub mod priors;
pub mod infer;
pub mod sdesim;

pub use error::{Error, Result};
