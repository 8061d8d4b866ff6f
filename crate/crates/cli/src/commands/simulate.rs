use nalgebra::DMatrix;
use rayon::prelude::*;
use stable_ssm::param::Ssm;
use stable_ssm::priors::RngStream;
use stable_ssm::sdesim::{euler_maruyama, make_dataset, propagate_moments_at, simulate_ensemble, write_long_csv, Dataset, EnsembleSummary, Moments};

use super::{run_input, streams};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::OutDir;

fn check_dims(cfg: &RunConfig, s: &Ssm) -> CliResult<()> {
    if s.dims() != cfg.dims {
        return Err(CliError::Config(format!("model dims {:?} differ from config dims {:?}", s.dims(), cfg.dims)));
    }
    Ok(())
}

/// Writes `count` Euler–Maruyama paths (`paths/path_<p>.csv`, stats `x` and `y`)
/// and an ensemble summary of `paths_per_draw` paths (`ensemble.csv`).
pub fn simulate(cfg: &RunConfig, s: &Ssm, count: usize, out: &OutDir) -> CliResult<EnsembleSummary> {
    check_dims(cfg, s)?;
    let grid = cfg.horizon_grid()?;
    let record = cfg.record_nodes(&grid);
    let u = run_input(cfg, s.dims().l)?;
    let x0 = cfg.x0();
    let stream = RngStream::new(cfg.seed, streams::SIMULATE);
    let paths: Vec<_> = (0..count)
        .into_par_iter()
        .map(|p| euler_maruyama(s, &x0, &u, &grid, &mut stream.child(p as u64).rng()))
        .collect::<Result<_, _>>()?;
    let dir = out.sub("paths")?;
    let times: Vec<f64> = record.iter().map(|&i| grid.time(i)).collect();
    let width = count.saturating_sub(1).to_string().len().max(3);
    for (p, path) in paths.iter().enumerate() {
        let x = path.states.select_columns(&record);
        let y = path.outputs.select_columns(&record);
        dir.write_with(&format!("path_{p:0width$}.csv"), |w| write_long_csv(w, &times, &[("x", &x), ("y", &y)], true))?;
    }
    let ens = simulate_ensemble(s, &x0, &u, &grid, cfg.inference.paths_per_draw, RngStream::new(cfg.seed, streams::ENSEMBLE), Some(&record))?;
    out.write_with("ensemble.csv", |w| ens.write_csv(w))?;
    Ok(ens)
}

/// Exact first and second moments at the recorded nodes.
pub fn moment_table(cfg: &RunConfig, s: &Ssm) -> CliResult<Moments> {
    let grid = cfg.horizon_grid()?;
    let record = cfg.record_nodes(&grid);
    let u = run_input(cfg, s.dims().l)?;
    Ok(propagate_moments_at(s, &cfg.x0(), &u, &grid, &record, None)?)
}

/// Output and state mean and variance columns of a moment table.
pub fn moment_series(m: &Moments) -> [(&'static str, DMatrix<f64>); 4] {
    let k = m.times.len();
    let (n, q) = (m.mean.first().map_or(0, |v| v.len()), m.out_mean.first().map_or(0, |v| v.len()));
    let mut out_mean = DMatrix::zeros(q, k);
    let mut out_var = DMatrix::zeros(q, k);
    let mut x_mean = DMatrix::zeros(n, k);
    let mut x_var = DMatrix::zeros(n, k);
    for j in 0..k {
        out_mean.set_column(j, &m.out_mean[j]);
        out_var.set_column(j, &m.out_cov[j].diagonal());
        x_mean.set_column(j, &m.mean[j]);
        let cov = &m.second[j] - &m.mean[j] * m.mean[j].transpose();
        x_var.set_column(j, &cov.diagonal().map(|v| v.max(0.0)));
    }
    [("mean", out_mean), ("var", out_var), ("x_mean", x_mean), ("x_var", x_var)]
}

/// Writes `moments.csv` with output stats `mean`, `var` and state stats `x_mean`, `x_var`.
pub fn moments(cfg: &RunConfig, s: &Ssm, out: &OutDir) -> CliResult<Moments> {
    check_dims(cfg, s)?;
    let m = moment_table(cfg, s)?;
    let series = moment_series(&m);
    let refs: Vec<(&str, &DMatrix<f64>)> = series.iter().map(|(n, v)| (*n, v)).collect();
    out.write_with("moments.csv", |w| write_long_csv(w, &m.times, &refs, true))?;
    Ok(m)
}

/// Simulates the `M` realizations observed at `N` times over the inference window,
/// writing `dataset.json` and `realizations/realization_<k>.csv` (stats `u` and `y`).
pub fn make_data(cfg: &RunConfig, s: &Ssm, out: &OutDir) -> CliResult<Dataset> {
    check_dims(cfg, s)?;
    let grid = cfg.horizon_grid()?;
    let meas = grid.measurement_indices(cfg.simulation.t_inference, cfg.dataset.measurements)?;
    let u = run_input(cfg, s.dims().l)?;
    let ds = make_dataset(
        s,
        &cfg.x0(),
        &u,
        &grid,
        &meas,
        cfg.dataset.realizations,
        cfg.dataset.sigma,
        RngStream::new(cfg.seed, streams::DATA),
    )?;
    out.write_json("dataset.json", &ds)?;
    let dir = out.sub("realizations")?;
    let width = ds.realizations().saturating_sub(1).to_string().len().max(2);
    for (k, y) in ds.outputs.iter().enumerate() {
        dir.write_with(&format!("realization_{k:0width$}.csv"), |w| write_long_csv(w, &ds.times, &[("u", &ds.inputs), ("y", &y.0)], true))?;
    }
    Ok(ds)
}
