//! Stability-enforcing prior distributions: samplers, closed-form
//! expectations, and densities over unconstrained coordinates.

pub(crate) mod brl;
mod config;
pub(crate) mod density;
mod gain;
mod rng;
mod wishart;
mod wns;

pub use brl::{sample_wns_brl, GainSampler, WnsBrlPrior};
pub use config::{CovSpec, Gaussian, GainPrior, MeanSpec, OrthPrior, QPrior, ScalarPrior, WnsBrlConfig, WnsConfig};
pub use density::{log_prior, ChartPrior};
pub use gain::{sample_acg_orthogonal, sample_cayley_orthogonal, sample_gain_block_dirichlet, sample_gain_block_zball, OrthSampler};
pub use rng::RngStream;
pub use wishart::{bartlett_diag_mean, chi_mean, expected_chol_factor, sample_bartlett_chol, DegreeConvention};
pub use wns::{expected_a, expected_f, expected_ftf, expected_q, sample_wns, QDraw, WnsPrior};
