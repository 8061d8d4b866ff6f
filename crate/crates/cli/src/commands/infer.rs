use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stable_ssm::infer::{
    best_of, diagnostics, free_param_baseline, posterior_predictive, run_kernel, BaselineConfig, BaselineModel, Chain, Diagnostics, LogDensity,
    MomentLikelihood, PosteriorModel, PredictiveSummary,
};
use stable_ssm::matfound::is_mean_square_stable;
use stable_ssm::param::Ssm;
use stable_ssm::priors::{ChartPrior, RngStream, WnsBrlConfig, WnsBrlPrior};
use stable_ssm::sdesim::{Dataset, InputSignal, TimeGrid};

use super::{run_input, streams, time_tol, window_predictive};
use crate::checks::certify_brl;
use crate::config::{InferenceSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::OutDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    /// Chain over the coordinates of the bounded-real prior.
    Parametrized,
    /// Chain over raw matrix entries.
    Baseline,
}

/// Stability of the retained draws: certificate checks for the parametrized
/// chain, mean-square stability for the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCount {
    pub kept: usize,
    pub unstable: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub mode: InferMode,
    pub chain: Chain,
    pub diagnostics: Diagnostics,
    pub predictive: PredictiveSummary,
    pub stability: StabilityCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InferSummary {
    mode: InferMode,
    prior_only: bool,
    t_inference: f64,
    horizon: f64,
    acceptance_rate: f64,
    stability: StabilityCount,
    predictive_draws: usize,
    predictive_failed: Vec<usize>,
}

/// Everything a chain and its predictive need besides the data.
pub(crate) struct Problem<'a> {
    pub prior: &'a WnsBrlConfig,
    pub baseline: &'a BaselineConfig,
    pub inference: &'a InferenceSpec,
    pub x0: Vec<f64>,
    pub input: InputSignal,
    pub grid: TimeGrid,
    pub record: Vec<usize>,
}

pub(crate) enum Target {
    Parametrized(PosteriorModel),
    Baseline(BaselineModel),
}

impl Target {
    pub(crate) fn build(p: &Problem, mode: InferMode, data: Option<&Dataset>) -> CliResult<Self> {
        let lik = data.map(|d| MomentLikelihood::new(d, p.inference.moment_dt)).transpose()?;
        Ok(match mode {
            InferMode::Parametrized => {
                let prior = ChartPrior::for_brl(&WnsBrlPrior::from_config(p.prior)?)?;
                Target::Parametrized(PosteriorModel::new(prior, lik)?)
            }
            InferMode::Baseline => Target::Baseline(BaselineModel::new(p.baseline.clone(), lik)?),
        })
    }

    fn density(&self) -> &dyn LogDensity {
        match self {
            Target::Parametrized(m) => m,
            Target::Baseline(m) => m,
        }
    }

    pub(crate) fn sample_prior(&self, stream: RngStream, count: usize) -> CliResult<Vec<Vec<f64>>> {
        let mut rng = stream.rng();
        (0..count)
            .map(|_| match self {
                Target::Parametrized(m) => Ok(m.sample_prior(&mut rng)?),
                Target::Baseline(m) => Ok(m.sample_prior(&mut rng)),
            })
            .collect()
    }

    pub(crate) fn realize(&self, x: &[f64]) -> stable_ssm::Result<Ssm> {
        match self {
            Target::Parametrized(m) => m.realize(x).map(|r| r.ssm),
            Target::Baseline(m) => m.realize(x),
        }
    }

    fn is_unstable(&self, x: &[f64]) -> CliResult<bool> {
        Ok(match self {
            Target::Parametrized(m) => match m.realize(x) {
                Ok(r) => !certify_brl(&r.ssm, &r.p, &r.params)?.passed,
                Err(_) => true,
            },
            Target::Baseline(m) => match m.realize(x) {
                Ok(s) => is_mean_square_stable(&s.a, &s.f).map_or(true, |v| !v.stable),
                Err(_) => true,
            },
        })
    }
}

fn streams_for(mode: InferMode) -> (u64, u64, u64) {
    match mode {
        InferMode::Parametrized => (streams::INIT, streams::CHAIN, streams::PREDICTIVE),
        InferMode::Baseline => (streams::BASELINE_INIT, streams::BASELINE_CHAIN, streams::BASELINE_PREDICTIVE),
    }
}

pub(crate) fn instability(draws: &[Vec<f64>], target: &Target) -> CliResult<StabilityCount> {
    let flags: Vec<bool> = draws.par_iter().map(|x| target.is_unstable(x)).collect::<CliResult<_>>()?;
    let unstable = flags.iter().filter(|&&b| b).count();
    Ok(StabilityCount { kept: draws.len(), unstable, fraction: unstable as f64 / draws.len().max(1) as f64 })
}

/// Streams are children of `stream_base`. Initializes at the best of `init_candidates` prior draws, runs the kernel,
/// and simulates the posterior predictive of the last `keep_last` draws.
pub(crate) fn run_chain(p: &Problem, mode: InferMode, target: &Target, stream_base: RngStream) -> CliResult<InferOutcome> {
    let (s_init, s_chain, s_pred) = streams_for(mode);
    let sub = |id: u64| stream_base.child(id);
    let candidates = target.sample_prior(sub(s_init), p.inference.init_candidates)?;
    let init = best_of(target.density(), candidates)?;
    let inf = p.inference;
    let chain = match target {
        Target::Parametrized(m) => run_kernel(m, &init, inf.iterations, &inf.kernel, sub(s_chain))?,
        Target::Baseline(m) => free_param_baseline(m, &init, inf.iterations, &inf.kernel, sub(s_chain))?,
    };
    let burn = inf.burn_in.unwrap_or(inf.iterations / 2);
    let diag = diagnostics(&chain, burn)?;
    let kept = chain.tail(inf.keep_last)?;
    let stability = instability(kept, target)?;
    let predictive = posterior_predictive(
        &chain,
        |x| target.realize(x),
        inf.keep_last,
        inf.paths_per_draw,
        &p.x0,
        &p.input,
        &p.grid,
        &p.record,
        sub(s_pred),
    )?;
    Ok(InferOutcome { mode, chain, diagnostics: diag, predictive, stability })
}

/// Writes the chain, its diagnostics and the predictive summaries split at `t_inference`.
pub(crate) fn write_outcome(o: &InferOutcome, prior_only: bool, t_inference: f64, horizon: f64, tol: f64, out: &OutDir) -> CliResult<()> {
    out.write_with("chain.csv", |w| o.chain.write_csv(w))?;
    out.write_json("chain_meta.json", &o.chain.meta())?;
    out.write_json("diagnostics.json", &o.diagnostics)?;
    let inside = window_predictive(&o.predictive, |t| t <= t_inference + tol);
    let beyond = window_predictive(&o.predictive, |t| t >= t_inference - tol);
    out.write_with("predictive_inference.csv", |w| inside.write_csv(w))?;
    out.write_with("predictive_extrapolation.csv", |w| beyond.write_csv(w))?;
    out.write_json(
        "summary.json",
        &InferSummary {
            mode: o.mode,
            prior_only,
            t_inference,
            horizon,
            acceptance_rate: o.chain.acceptance_rate(),
            stability: o.stability.clone(),
            predictive_draws: o.predictive.per_draw.len(),
            predictive_failed: o.predictive.failed.clone(),
        },
    )?;
    Ok(())
}

pub(crate) fn problem<'a>(cfg: &'a RunConfig, data: Option<&Dataset>) -> CliResult<Problem<'a>> {
    let grid = cfg.horizon_grid()?;
    let (x0, input) = match data {
        Some(d) => (d.x0.clone(), d.input.clone()),
        None => (cfg.x0(), run_input(cfg, cfg.dims.l)?),
    };
    if x0.len() != cfg.dims.n || input.channels() != cfg.dims.l {
        return Err(CliError::Config("dataset dimensions differ from the config".into()));
    }
    Ok(Problem {
        prior: &cfg.inference_prior,
        baseline: &cfg.baseline,
        inference: &cfg.inference,
        x0,
        input,
        record: cfg.record_nodes(&grid),
        grid,
    })
}

/// Runs the configured kernel on a dataset (or on the prior alone) and writes
/// `chain.csv`, `chain_meta.json`, `diagnostics.json`, `summary.json` and the
/// predictive summaries of both windows. Zero accepted proposals is an error
/// after the artifacts are written.
pub fn infer(cfg: &RunConfig, data: Option<&Dataset>, mode: InferMode, out: &OutDir) -> CliResult<InferOutcome> {
    let p = problem(cfg, data)?;
    let target = Target::build(&p, mode, data)?;
    let o = run_chain(&p, mode, &target, RngStream::new(cfg.seed, 0))?;
    write_outcome(&o, data.is_none(), cfg.simulation.t_inference, cfg.horizon(), time_tol(cfg), out)?;
    if o.chain.accepted == 0 {
        return Err(CliError::ZeroAcceptance);
    }
    Ok(o)
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    crate::io::read_json(path)
}
