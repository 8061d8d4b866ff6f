//! Simulation of `dx = (Ax + Bu)dt + [Fx  Gu]dw`, `y = Cx + Du`: Euler–Maruyama
//! paths and ensembles, Itô moment equations, datasets, and gain estimates.

mod adjoint;
mod dataset;
mod em;
mod ensemble;
mod grid;
mod input;
mod kernel;
mod moments;

pub use dataset::{empirical_gain, make_dataset, Dataset, Outputs};
pub use em::{euler_maruyama, euler_maruyama_with_increments, wiener_increments, Path};
pub use ensemble::{simulate_ensemble, write_long_csv, EnsembleSummary};
pub use grid::TimeGrid;
pub use input::{make_fourier_input, InputCache, InputSignal};
pub use moments::{propagate_moments, propagate_moments_at, Moments};

pub use adjoint::SsmGrad;
pub(crate) use adjoint::moment_functional_grad;
pub(crate) use moments::MomentIntegrator;
