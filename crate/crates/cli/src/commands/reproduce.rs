use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stable_ssm::infer::{predictive_from_draws, PredictiveSummary};
use stable_ssm::param::Dims;
use stable_ssm::priors::RngStream;
use stable_ssm::sdesim::{make_dataset, make_fourier_input, propagate_moments_at, write_long_csv, TimeGrid};

use super::infer::{run_chain, write_outcome, InferMode, Problem, Target};
use super::simulate::{make_data, moment_series, moment_table};
use super::{draw_model, infer, model_document, streams, time_tol, StabilityCount};
use crate::checks::{certify_brl, CertificateReport};
use crate::config::{ConsistencySpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::OutDir;

/// Largest allowed ratio of an extrapolation-window summary to its inference-window maximum.
pub const BOUNDEDNESS_FACTOR: f64 = 10.0;

/// Largest allowed posterior-to-prior predictive RMSE ratio on the consistency problem.
pub const CONSISTENCY_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub acceptance_rate: f64,
    pub forced_rejections: usize,
    pub divergences: usize,
    pub stability: StabilityCount,
    /// Retained draws whose predictive simulation diverged.
    pub predictive_failed: usize,
}

/// `max |s(t)|` over the extrapolation window divided by its maximum over the
/// inference window, per output channel, for the pooled mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessCheck {
    pub factor: f64,
    pub mean_ratio: Vec<f64>,
    pub var_ratio: Vec<f64>,
    /// Largest ratio over the individual draws' mean and variance summaries.
    pub per_draw_max_ratio: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub dims: Dims,
    pub acceptance_rate: f64,
    /// Root-mean-square error of the pooled predictive mean against the true output mean over the inference window.
    pub prior_rmse: f64,
    pub posterior_rmse: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub seed: u64,
    pub dims: Dims,
    /// End of the inference window; the extrapolation window follows it.
    pub t_inference: f64,
    pub horizon: f64,
    pub truth: CertificateReport,
    pub parametrized: ChainReport,
    pub baseline: ChainReport,
    pub boundedness: BoundednessCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyReport>,
}

fn chain_report(o: &super::InferOutcome) -> ChainReport {
    ChainReport {
        acceptance_rate: o.chain.acceptance_rate(),
        forced_rejections: o.chain.forced_rejections,
        divergences: o.chain.divergences,
        stability: o.stability.clone(),
        predictive_failed: o.predictive.failed.len(),
    }
}

fn split_max(m: &DMatrix<f64>, times: &[f64], t_split: f64, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let mut inside = vec![0.0_f64; m.nrows()];
    let mut beyond = vec![0.0_f64; m.nrows()];
    for (k, &t) in times.iter().enumerate() {
        for c in 0..m.nrows() {
            let v = m[(c, k)].abs();
            if t <= t_split + tol {
                inside[c] = inside[c].max(v);
            }
            if t >= t_split - tol {
                // NaN marks a diverged summary and must fail the check.
                beyond[c] = if v.is_nan() { f64::INFINITY } else { beyond[c].max(v) };
            }
        }
    }
    (inside, beyond)
}

fn ratios(m: &DMatrix<f64>, times: &[f64], t_split: f64, tol: f64) -> Vec<f64> {
    let (inside, beyond) = split_max(m, times, t_split, tol);
    inside
        .iter()
        .zip(&beyond)
        .map(|(&i, &b)| if b == 0.0 { 0.0 } else if i > 0.0 { b / i } else { f64::INFINITY })
        .collect()
}

pub(crate) fn boundedness(p: &PredictiveSummary, t_split: f64, tol: f64) -> BoundednessCheck {
    let mean_ratio = ratios(&p.mean_of_means, &p.times, t_split, tol);
    let var_ratio = ratios(&p.mean_of_vars, &p.times, t_split, tol);
    let per_draw_max_ratio = p
        .per_draw
        .iter()
        .flat_map(|e| ratios(&e.mean, &e.times, t_split, tol).into_iter().chain(ratios(&e.var, &e.times, t_split, tol)))
        .fold(0.0, f64::max);
    let bounded = mean_ratio.iter().chain(&var_ratio).all(|&r| r <= BOUNDEDNESS_FACTOR) && !p.per_draw.is_empty();
    BoundednessCheck { factor: BOUNDEDNESS_FACTOR, mean_ratio, var_ratio, per_draw_max_ratio, bounded }
}

fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

/// Strong-data problem over the inference window only: posterior against prior predictive mean.
fn consistency(cfg: &RunConfig, c: &ConsistencySpec, out: &OutDir) -> CliResult<ConsistencyReport> {
    let base = RngStream::new(cfg.seed, streams::CONSISTENCY);
    let (gen, inf_prior) = cfg.consistency_priors(c.dims);
    let (params, truth, p) = draw_model(&gen, base.child(0))?;
    out.write_json("truth.json", &model_document(params, truth.clone(), p))?;
    let t_end = cfg.simulation.t_inference;
    let grid = TimeGrid::new(0.0, t_end, cfg.simulation.dt)?;
    let input = make_fourier_input(c.dims.l, c.dataset.harmonics, cfg.horizon(), &mut base.child(1).rng())?;
    let x0 = vec![0.0; c.dims.n];
    let meas = grid.measurement_indices(t_end, c.dataset.measurements)?;
    let data = make_dataset(&truth, &x0, &input, &grid, &meas, c.dataset.realizations, c.dataset.sigma, base.child(2))?;
    out.write_json("dataset.json", &data)?;

    let mut record: Vec<usize> = (0..grid.len()).step_by(cfg.simulation.record_every).collect();
    if record.last() != Some(&(grid.len() - 1)) {
        record.push(grid.len() - 1);
    }
    let prob = Problem { prior: &inf_prior, baseline: &cfg.baseline, inference: &c.inference, x0: x0.clone(), input: input.clone(), grid, record: record.clone() };
    let target = Target::build(&prob, InferMode::Parametrized, Some(&data))?;
    let post = run_chain(&prob, InferMode::Parametrized, &target, base.child(3))?;
    write_outcome(&post, false, t_end, t_end, time_tol(cfg), out)?;
    if post.chain.accepted == 0 {
        return Err(CliError::ZeroAcceptance);
    }

    let prior_target = Target::build(&prob, InferMode::Parametrized, None)?;
    let prior_draws = prior_target.sample_prior(base.child(4), c.inference.keep_last)?;
    let prior = predictive_from_draws(&prior_draws, 0, |x| prior_target.realize(x), c.inference.paths_per_draw, &x0, &input, &grid, &record, base.child(5))?;
    out.write_with("prior_predictive.csv", |w| prior.write_csv(w))?;

    let m = propagate_moments_at(&truth, &x0, &input, &grid, &record, None)?;
    let [(_, truth_mean), (_, truth_var), ..] = moment_series(&m);
    let prior_rmse = rmse(&prior.mean_of_means, &truth_mean);
    let posterior_rmse = rmse(&post.predictive.mean_of_means, &truth_mean);
    out.write_with("overlay.csv", |w| {
        write_long_csv(
            w,
            &m.times,
            &[
                ("truth_mean", &truth_mean),
                ("truth_var", &truth_var),
                ("prior_mean", &prior.mean_of_means),
                ("prior_var", &prior.mean_of_vars),
                ("posterior_mean", &post.predictive.mean_of_means),
                ("posterior_var", &post.predictive.mean_of_vars),
            ],
            true,
        )
    })?;
    let ratio = posterior_rmse / prior_rmse;
    Ok(ConsistencyReport {
        dims: c.dims,
        acceptance_rate: post.chain.acceptance_rate(),
        prior_rmse,
        posterior_rmse,
        ratio,
        threshold: CONSISTENCY_RATIO,
        passed: ratio <= CONSISTENCY_RATIO,
    })
}

/// End-to-end experiment: ground truth from the generation prior, dataset,
/// parametrized and baseline chains, overlays of both predictives against the
/// true moments, the consistency problem, and `report.json`.
pub fn reproduce(cfg: &RunConfig, out: &OutDir) -> CliResult<ReproduceReport> {
    out.write_json("config.json", cfg)?;
    let (params, truth, p) = draw_model(&cfg.generation, RngStream::new(cfg.seed, streams::TRUTH))?;
    let truth_check = certify_brl(&truth, &p, &params)?;
    let truth_dir = out.sub("truth")?;
    truth_dir.write_json("model.json", &model_document(params, truth.clone(), p))?;
    let data = make_data(cfg, &truth, &out.sub("dataset")?)?;

    let param = infer(cfg, Some(&data), InferMode::Parametrized, &out.sub("parametrized")?)?;
    let base = infer(cfg, Some(&data), InferMode::Baseline, &out.sub("baseline")?)?;

    let m = moment_table(cfg, &truth)?;
    let series = moment_series(&m);
    let refs: Vec<(&str, &DMatrix<f64>)> = series.iter().map(|(n, v)| (*n, v)).collect();
    truth_dir.write_with("moments.csv", |w| write_long_csv(w, &m.times, &refs, true))?;
    out.write_with("overlay.csv", |w| {
        write_long_csv(
            w,
            &m.times,
            &[
                ("truth_mean", &series[0].1),
                ("truth_var", &series[1].1),
                ("parametrized_mean", &param.predictive.mean_of_means),
                ("parametrized_var", &param.predictive.mean_of_vars),
                ("baseline_mean", &base.predictive.mean_of_means),
                ("baseline_var", &base.predictive.mean_of_vars),
            ],
            true,
        )
    })?;

    let consistency = match &cfg.consistency {
        Some(c) => Some(consistency(cfg, c, &out.sub("consistency")?)?),
        None => None,
    };
    let report = ReproduceReport {
        seed: cfg.seed,
        dims: cfg.dims,
        t_inference: cfg.simulation.t_inference,
        horizon: cfg.horizon(),
        truth: truth_check,
        parametrized: chain_report(&param),
        baseline: chain_report(&base),
        boundedness: boundedness(&param.predictive, cfg.simulation.t_inference, time_tol(cfg)),
        consistency,
    };
    out.write_json("report.json", &report)?;
    Ok(report)
}
