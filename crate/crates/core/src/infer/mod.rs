//! Bayesian inference over parametrized and free models: moment-Gaussian
//! likelihood, random-walk Metropolis and HMC kernels, posterior predictive
//! ensembles, and chain diagnostics.

mod baseline;
mod diagnostics;
mod kernels;
mod likelihood;
mod posterior;
mod predictive;
mod target;

pub use baseline::{free_param_baseline, BaselineConfig, BaselineModel};
pub use diagnostics::{autocorr_time, diagnostics, Diagnostics};
pub use kernels::{hmc, leapfrog, run_kernel, rw_metropolis, Chain, ChainMeta, KernelConfig, Trajectory, DIVERGENCE_THRESHOLD};
pub use likelihood::{MomentLikelihood, BLOWUP};
pub use posterior::{best_of, PosteriorModel, Realized};
pub use predictive::{posterior_predictive, predictive_from_draws, PredictiveSummary};
pub use target::{value_and_gradient, GradientMode, LogDensity};
