use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::kernels::Chain;
use crate::matfound::rows_serde;
use crate::param::Ssm;
use crate::priors::RngStream;
use crate::sdesim::{simulate_ensemble, write_long_csv, EnsembleSummary, InputSignal, TimeGrid};

/// Ensemble summaries of the retained posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub times: Vec<f64>,
    /// Chain iteration of each entry of `per_draw`.
    pub draw_index: Vec<usize>,
    pub per_draw: Vec<EnsembleSummary>,
    /// Chain iterations whose simulation diverged; excluded from the pooled summary.
    pub failed: Vec<usize>,
    #[serde(with = "rows_serde")]
    pub mean_of_means: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub mean_of_vars: DMatrix<f64>,
}

/// Simulates `paths_per_draw` trajectories for each of the last `keep_last`
/// draws (draw `j` on stream `stream.child(j)`) and summarizes them at `record`.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predictive<F>(
    chain: &Chain,
    realize: F,
    keep_last: usize,
    paths_per_draw: usize,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    record: &[usize],
    stream: RngStream,
) -> Result<PredictiveSummary>
where
    F: Fn(&[f64]) -> Result<Ssm>,
{
    let kept = chain.tail(keep_last)?;
    let first = chain.len() - keep_last;
    predictive_from_draws(kept, first, realize, paths_per_draw, x0, u, grid, record, stream)
}

/// As [`posterior_predictive`], for an explicit list of draws.
#[allow(clippy::too_many_arguments)]
pub fn predictive_from_draws<F>(
    draws: &[Vec<f64>],
    first_index: usize,
    realize: F,
    paths_per_draw: usize,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    record: &[usize],
    stream: RngStream,
) -> Result<PredictiveSummary>
where
    F: Fn(&[f64]) -> Result<Ssm>,
{
    if draws.is_empty() {
        return Err(Error::InvalidConfig("no draws to simulate".into()));
    }
    let times: Vec<f64> = record.iter().map(|&i| grid.time(i)).collect();
    let mut per_draw = Vec::with_capacity(draws.len());
    let mut draw_index = Vec::with_capacity(draws.len());
    let mut failed = Vec::new();
    for (j, x) in draws.iter().enumerate() {
        let s = realize(x)?;
        match simulate_ensemble(&s, x0, u, grid, paths_per_draw, stream.child(j as u64), Some(record)) {
            Ok(e) if e.mean.iter().chain(e.var.iter()).all(|v| v.is_finite()) => {
                per_draw.push(e);
                draw_index.push(first_index + j);
            }
            Ok(_) | Err(Error::NonFiniteState(_)) => failed.push(first_index + j),
            Err(e) => return Err(e),
        }
    }
    let q = per_draw.first().map_or_else(|| realize(&draws[0]).map(|s| s.dims().q), |e| Ok(e.mean.nrows()))?;
    let mut mean_of_means = DMatrix::zeros(q, times.len());
    let mut mean_of_vars = DMatrix::zeros(q, times.len());
    if !per_draw.is_empty() {
        for e in &per_draw {
            mean_of_means += &e.mean;
            mean_of_vars += &e.var;
        }
        mean_of_means /= per_draw.len() as f64;
        mean_of_vars /= per_draw.len() as f64;
    } else {
        mean_of_means.fill(f64::NAN);
        mean_of_vars.fill(f64::NAN);
    }
    Ok(PredictiveSummary { times, draw_index, per_draw, failed, mean_of_means, mean_of_vars })
}

impl PredictiveSummary {
    /// Long-format overlay: `draw<k>_mean`, `draw<k>_var` per draw, then `pooled_mean`, `pooled_var`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let names: Vec<(String, String)> = self.draw_index.iter().map(|k| (format!("draw{k}_mean"), format!("draw{k}_var"))).collect();
        let mut series: Vec<(&str, &DMatrix<f64>)> = Vec::with_capacity(2 * names.len() + 2);
        for ((mn, vn), e) in names.iter().zip(&self.per_draw) {
            series.push((mn, &e.mean));
            series.push((vn, &e.var));
        }
        series.push(("pooled_mean", &self.mean_of_means));
        series.push(("pooled_var", &self.mean_of_vars));
        write_long_csv(w, &self.times, &series, true)
    }
}
