use serde::{Deserialize, Serialize};
use stable_ssm::infer::{BaselineConfig, GradientMode, KernelConfig};
use stable_ssm::param::Dims;
use stable_ssm::priors::{CovSpec, GainPrior, MeanSpec, OrthPrior, QPrior, ScalarPrior, WnsBrlConfig, WnsConfig};
use stable_ssm::sdesim::TimeGrid;

use crate::error::{CliError, CliResult};

pub const RUN_SCHEMA: &str = "stable-ssm/run/v1";

/// Everything a command needs; every field is explicit in the echoed copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub dims: Dims,
    pub seed: u64,
    /// Prior used by `sample` and to draw the ground truth.
    pub generation: WnsBrlConfig,
    /// Prior of the parametrized posterior.
    pub inference_prior: WnsBrlConfig,
    /// Entry-wise prior of the free-parameter baseline.
    pub baseline: BaselineConfig,
    pub simulation: SimulationSpec,
    pub dataset: DatasetSpec,
    pub inference: InferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub dt: f64,
    /// End of the inference window; simulation starts at 0.
    pub t_inference: f64,
    /// Extrapolation window length as a multiple of the inference window.
    pub extrapolation_factor: f64,
    /// Initial state; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Grid stride of recorded summaries.
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// `M`, independent realizations.
    pub realizations: usize,
    /// `N`, measurement times on the inference window.
    pub measurements: usize,
    pub sigma: f64,
    /// Fourier terms of the input.
    pub harmonics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSpec {
    pub kernel: KernelConfig,
    pub iterations: usize,
    pub keep_last: usize,
    pub paths_per_draw: usize,
    /// Step of the moment integration inside the likelihood; the data step when absent.
    #[serde(default)]
    pub moment_dt: Option<f64>,
    /// Prior draws scored to pick the starting point.
    pub init_candidates: usize,
    /// Draws discarded by the diagnostics; half the chain when absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

/// Strong-data problem on which the posterior predictive must beat the prior predictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencySpec {
    pub dims: Dims,
    pub dataset: DatasetSpec,
    pub inference: InferenceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

fn check(ok: bool, msg: impl Into<String>) -> CliResult<()> {
    if ok { Ok(()) } else { Err(CliError::Config(msg.into())) }
}

impl RunConfig {
    pub fn from_json(s: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.resolve()
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => desk(),
            Preset::Paper => paper(),
        }
        .resolve()
        .expect("built-in presets are valid")
    }

    /// Validates and fills every optional field.
    pub fn resolve(mut self) -> CliResult<Self> {
        check(self.schema == RUN_SCHEMA, format!("unsupported schema '{}', expected '{RUN_SCHEMA}'", self.schema))?;
        let d = self.dims;
        for (name, p) in [("generation", &self.generation), ("inference_prior", &self.inference_prior)] {
            check((p.base.n, p.l, p.q) == (d.n, d.l, d.q), format!("{name} dimensions differ from dims"))?;
        }
        let b = &self.baseline;
        check((b.n, b.l, b.q) == (d.n, d.l, d.q), "baseline dimensions differ from dims")?;
        let sim = &mut self.simulation;
        check(sim.t_inference > 0.0 && sim.extrapolation_factor >= 0.0, "simulation windows must be positive")?;
        check(sim.record_every > 0, "record_every must be positive")?;
        let x0 = sim.x0.get_or_insert_with(|| vec![0.0; d.n]);
        check(x0.len() == d.n, "x0 length differs from n")?;
        self.horizon_grid()?;
        self.dataset.validate()?;
        self.inference.resolve(self.simulation.dt)?;
        if let Some(c) = &mut self.consistency {
            c.dataset.validate()?;
            c.inference.resolve(self.simulation.dt)?;
        }
        Ok(self)
    }

    pub fn x0(&self) -> Vec<f64> {
        self.simulation.x0.clone().unwrap_or_else(|| vec![0.0; self.dims.n])
    }

    pub fn horizon(&self) -> f64 {
        self.simulation.t_inference * (1.0 + self.simulation.extrapolation_factor)
    }

    pub fn horizon_grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(0.0, self.horizon(), self.simulation.dt)?)
    }

    /// Recorded grid nodes: every `record_every`-th node plus the last.
    pub fn record_nodes(&self, grid: &TimeGrid) -> Vec<usize> {
        let mut r: Vec<usize> = (0..grid.len()).step_by(self.simulation.record_every).collect();
        if r.last() != Some(&(grid.len() - 1)) {
            r.push(grid.len() - 1);
        }
        r
    }

    /// The same run with every prior resized to `dims`.
    pub fn with_dims(&self, dims: Dims) -> CliResult<Self> {
        let mut c = self.clone();
        (c.generation, c.inference_prior) = self.consistency_priors(dims);
        (c.baseline.n, c.baseline.l, c.baseline.q) = (dims.n, dims.l, dims.q);
        c.dims = dims;
        c.simulation.x0 = None;
        c.resolve()
    }

    /// Generation and inference priors with the dimensions swapped for the consistency problem.
    pub fn consistency_priors(&self, dims: Dims) -> (WnsBrlConfig, WnsBrlConfig) {
        let resize = |p: &WnsBrlConfig| {
            let mut p = p.clone();
            p.base.n = dims.n;
            p.l = dims.l;
            p.q = dims.q;
            p
        };
        (resize(&self.generation), resize(&self.inference_prior))
    }
}

impl DatasetSpec {
    fn validate(&self) -> CliResult<()> {
        check(self.realizations > 0 && self.measurements > 0, "dataset needs realizations and measurements")?;
        check(self.sigma >= 0.0 && self.sigma.is_finite(), "sigma must be non-negative")?;
        check(self.harmonics > 0, "the input needs at least one harmonic")
    }
}

impl InferenceSpec {
    fn resolve(&mut self, dt: f64) -> CliResult<()> {
        self.kernel.validate()?;
        check(self.iterations > 0, "iterations must be positive")?;
        check(self.keep_last > 0 && self.keep_last <= self.iterations, "keep_last must lie in [1, iterations]")?;
        check(self.paths_per_draw >= 2, "paths_per_draw must be at least 2")?;
        check(self.init_candidates > 0, "init_candidates must be positive")?;
        self.moment_dt.get_or_insert(dt);
        let burn = *self.burn_in.get_or_insert(self.iterations / 2);
        check(burn < self.iterations, "burn_in must be smaller than iterations")
    }
}

fn cayley_orth() -> OrthPrior {
    OrthPrior::Cayley { mu_u: MeanSpec::Constant(0.0), sigma_u: CovSpec::Isotropic(1.0), mu_v: MeanSpec::Constant(0.0), sigma_v: CovSpec::Isotropic(1.0) }
}

/// Q-WNS-BRL-Cayley prior.
fn q_wns_brl(d: Dims, k_p: f64, k_q: f64, sigma_q: f64, sigma_s: f64, gamma: ScalarPrior, rho: ScalarPrior) -> WnsBrlConfig {
    WnsBrlConfig {
        base: WnsConfig {
            n: d.n,
            k_p,
            sigma_p: CovSpec::Isotropic(1.0),
            mu_f: MeanSpec::Constant(0.0),
            sigma_f: CovSpec::Isotropic(2.0),
            mu_s: MeanSpec::Constant(0.0),
            sigma_s: CovSpec::Isotropic(sigma_s),
            q: QPrior::Wishart { k_q, sigma_q: CovSpec::Isotropic(sigma_q) },
        },
        l: d.l,
        q: d.q,
        mu_c: MeanSpec::Constant(0.0),
        sigma_c: CovSpec::Isotropic(2.0),
        gamma,
        rho,
        eps: 1e-4,
        orth: cayley_orth(),
        gain: GainPrior::ZBall,
    }
}

fn base_config(d: Dims) -> RunConfig {
    RunConfig {
        schema: RUN_SCHEMA.into(),
        dims: d,
        seed: 2025,
        generation: q_wns_brl(d, 6.0, 6.0, 2.0, 0.01, ScalarPrior::Fixed { value: 3.0 }, ScalarPrior::Fixed { value: 0.3 }),
        inference_prior: q_wns_brl(
            d,
            4.0,
            4.0,
            1.0,
            1.0,
            ScalarPrior::Gamma { shape: 1.0, scale: 1.0 },
            ScalarPrior::Uniform { lo: -0.95, hi: 0.95 },
        ),
        baseline: BaselineConfig {
            n: d.n,
            l: d.l,
            q: d.q,
            std_a: 1.0,
            std_b: 1.0,
            std_c: 1.0,
            std_d: 1.0,
            std_f: 1.0,
            std_g: 1.0,
            rho: ScalarPrior::Uniform { lo: -0.95, hi: 0.95 },
        },
        simulation: SimulationSpec { dt: 1e-3, t_inference: 3.0, extrapolation_factor: 2.0, x0: None, record_every: 30 },
        dataset: DatasetSpec { realizations: 10, measurements: 50, sigma: 0.15, harmonics: 6 },
        inference: InferenceSpec {
            kernel: KernelConfig::Hmc { step_size: 0.01, n_leapfrog: 3, gradient: GradientMode::Supplied },
            iterations: 4000,
            keep_last: 500,
            paths_per_draw: 100,
            moment_dt: Some(0.01),
            init_candidates: 64,
            burn_in: None,
        },
        consistency: None,
    }
}

fn consistency() -> ConsistencySpec {
    ConsistencySpec {
        dims: Dims { n: 2, l: 1, q: 1 },
        dataset: DatasetSpec { realizations: 20, measurements: 100, sigma: 0.05, harmonics: 6 },
        inference: InferenceSpec {
            kernel: KernelConfig::Rwm { scale: 0.1, warmup: 10_000, target_accept: 0.234 },
            iterations: 20_000,
            keep_last: 200,
            paths_per_draw: 100,
            moment_dt: Some(0.01),
            init_candidates: 256,
            burn_in: None,
        },
    }
}

/// Minutes-scale run: `n = 3`, `M = 10`, `N = 50`, 4000 iterations.
fn desk() -> RunConfig {
    let mut c = base_config(Dims { n: 3, l: 2, q: 1 });
    c.consistency = Some(consistency());
    c
}

/// The published experiment's sizes: `n = 4`, last 1000 draws.
fn paper() -> RunConfig {
    let mut c = base_config(Dims { n: 4, l: 2, q: 1 });
    c.inference.iterations = 10_000;
    c.inference.keep_last = 1000;
    c.consistency = Some(consistency());
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_round_trip() {
        for p in [Preset::Desk, Preset::Paper] {
            let c = RunConfig::preset(p);
            let s = serde_json::to_string_pretty(&c).unwrap();
            assert_eq!(RunConfig::from_json(&s).unwrap(), c);
            assert_eq!(c.x0(), vec![0.0; c.dims.n]);
            assert_eq!(c.inference.burn_in, Some(c.inference.iterations / 2));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(RunConfig::preset(Preset::Desk)).unwrap();
        v["simulation"]["bogus"] = serde_json::json!(1);
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(CliError::Config(_))));
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let mut c = RunConfig::preset(Preset::Desk);
        c.baseline.n = 5;
        assert!(c.resolve().is_err());
    }

    #[test]
    fn record_nodes_end_on_horizon() {
        let c = RunConfig::preset(Preset::Desk);
        let g = c.horizon_grid().unwrap();
        let r = c.record_nodes(&g);
        assert_eq!(r[0], 0);
        assert_eq!(*r.last().unwrap(), g.len() - 1);
    }
}
