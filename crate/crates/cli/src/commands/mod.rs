//! One module per subcommand, plus the helpers they share.

mod infer;
mod reproduce;
mod sample;
mod simulate;
mod verify;

use std::path::Path;

use nalgebra::DMatrix;
use stable_ssm::infer::PredictiveSummary;
use stable_ssm::param::{BrlParams, ChartParams, ModelDocument, Ssm};
use stable_ssm::matfound::SpdMatrix;
use stable_ssm::priors::{sample_wns_brl, RngStream, WnsBrlConfig, WnsBrlPrior};
use stable_ssm::sdesim::{make_fourier_input, EnsembleSummary, InputSignal};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub use infer::{infer, load_dataset, InferMode, InferOutcome, StabilityCount};
pub use reproduce::{reproduce, BoundednessCheck, ConsistencyReport, ReproduceReport};
pub use sample::{sample, SampleRow};
pub use simulate::{make_data, moments, simulate};
pub use verify::{verify, VerifyReport};

/// Stream ids, one per purpose, so that changing one step never shifts another's randomness.
pub mod streams {
    pub const SAMPLE: u64 = 1;
    pub const TRUTH: u64 = 2;
    pub const INPUT: u64 = 3;
    pub const DATA: u64 = 4;
    pub const SIMULATE: u64 = 5;
    pub const ENSEMBLE: u64 = 6;
    pub const INIT: u64 = 7;
    pub const CHAIN: u64 = 8;
    pub const PREDICTIVE: u64 = 9;
    pub const BASELINE_INIT: u64 = 10;
    pub const BASELINE_CHAIN: u64 = 11;
    pub const BASELINE_PREDICTIVE: u64 = 12;
    pub const CONSISTENCY: u64 = 13;
}

/// Draws a certified model from a bounded-real prior.
pub fn draw_model(prior: &WnsBrlConfig, stream: RngStream) -> CliResult<(BrlParams, Ssm, SpdMatrix)> {
    let prior = WnsBrlPrior::from_config(prior)?;
    Ok(sample_wns_brl(&prior, &mut stream.rng())?)
}

pub fn model_document(params: BrlParams, ssm: Ssm, p: SpdMatrix) -> ModelDocument {
    ModelDocument::new(ssm, Some(params.gamma), Some(p), Some(ChartParams::Brl(params)))
}

pub fn load_model(path: &Path) -> CliResult<ModelDocument> {
    let s = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(ModelDocument::from_json(&s)?)
}

/// The input signal of a run: Fourier series with one period over the whole horizon.
pub fn run_input(cfg: &RunConfig, l: usize) -> CliResult<InputSignal> {
    let mut rng = RngStream::new(cfg.seed, streams::INPUT).rng();
    Ok(make_fourier_input(l, cfg.dataset.harmonics, cfg.horizon(), &mut rng)?)
}

/// Columns of an ensemble summary whose times satisfy `keep`.
pub fn window(e: &EnsembleSummary, keep: impl Fn(f64) -> bool) -> EnsembleSummary {
    let cols: Vec<usize> = (0..e.times.len()).filter(|&k| keep(e.times[k])).collect();
    let pick = |m: &DMatrix<f64>| m.select_columns(&cols);
    EnsembleSummary {
        times: cols.iter().map(|&k| e.times[k]).collect(),
        mean: pick(&e.mean),
        var: pick(&e.var),
        mean_se: pick(&e.mean_se),
        var_se: pick(&e.var_se),
        paths: e.paths,
    }
}

/// [`window`] applied to every draw and to the pooled summaries.
pub fn window_predictive(p: &PredictiveSummary, keep: impl Fn(f64) -> bool + Copy) -> PredictiveSummary {
    let cols: Vec<usize> = (0..p.times.len()).filter(|&k| keep(p.times[k])).collect();
    PredictiveSummary {
        times: cols.iter().map(|&k| p.times[k]).collect(),
        draw_index: p.draw_index.clone(),
        per_draw: p.per_draw.iter().map(|e| window(e, keep)).collect(),
        failed: p.failed.clone(),
        mean_of_means: p.mean_of_means.select_columns(&cols),
        mean_of_vars: p.mean_of_vars.select_columns(&cols),
    }
}

/// Boundary time tolerance when splitting windows on grid times.
pub(crate) fn time_tol(cfg: &RunConfig) -> f64 {
    1e-9 * cfg.simulation.dt.max(cfg.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_keeps_matching_columns() {
        let m = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let e = EnsembleSummary { times: vec![0.0, 1.0, 2.0, 3.0], mean: m.clone(), var: m.clone(), mean_se: m.clone(), var_se: m, paths: 5 };
        let w = window(&e, |t| t >= 1.0 && t <= 2.0);
        assert_eq!(w.times, vec![1.0, 2.0]);
        assert_eq!(w.mean.as_slice(), &[2.0, 3.0]);
        assert_eq!(w.paths, 5);
    }
}
