//! Direct parametrizations of stable models, their inverse maps, certificate
//! assembly, eigenvalue diagnostics and unconstrained coordinates.

mod brl;
pub mod chart;
mod eigcheck;
mod io;
mod ssm;
mod stable_pair;

pub use brl::{
    assemble_brl_matrix, brl_params_from_ssm, check_brl_condition, ssm_from_brl_params, BrlParams, GainBlock, DEFAULT_EPS,
};
pub use chart::{ChartLayout, ChartParams, Segment, UnconstrainedVector};
pub use eigcheck::{eig_structure_check, EigResidual};
pub use io::{ModelDocument, SCHEMA_VERSION};
pub use ssm::{Dims, Ssm};
pub use stable_pair::{params_from_stable_pair, stable_pair_from_params, QMode, StablePairParams, SKEW_TOL};
