use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stable_ssm_cli::commands::{self, InferMode};
use stable_ssm_cli::io::OutDir;
use stable_ssm_cli::{CliError, CliResult, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "stable-ssm", version, about = "Stable stochastic state-space models: priors, simulation and inference")]
struct Cli {
    /// Run configuration (JSON); the preset is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: Preset,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Number of models (`sample`) or paths (`simulate`).
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Gain bound for `verify`.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Certificate `P` (JSON rows) for `verify`.
    #[arg(long, global = true)]
    certificate: Option<PathBuf>,
    /// Caps the worker threads.
    #[arg(long, global = true, env = "STABLE_SSM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw models from the generation prior.
    Sample,
    /// Check stability, the Lyapunov certificate and, with a gain bound, the bounded-real matrix.
    Verify { model: PathBuf },
    /// Euler–Maruyama paths and an ensemble summary.
    Simulate { model: PathBuf },
    /// Exact first and second moments.
    Moments { model: PathBuf },
    /// Noisy measurements of independent realizations.
    MakeData { model: PathBuf },
    /// MCMC on a dataset, or on the prior with `--prior-only`.
    Infer {
        dataset: Option<PathBuf>,
        /// Sample the posterior with no data, i.e. the prior
        #[arg(long)]
        prior_only: bool,
        /// Sample raw matrix entries instead of the parametrized prior.
        #[arg(long)]
        baseline: bool,
    },
    /// Ground truth, dataset, both chains, overlays and report.
    Reproduce,
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let s = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&s)?
        }
        None => RunConfig::preset(cli.preset),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::Verify { model } = &cli.command {
        let report = commands::verify(model, cli.certificate.as_deref(), cli.gamma)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        if !report.checks.passed {
            return Err(CliError::CheckFailed(format!("{} failed verification", model.display())));
        }
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let out = OutDir::create(&cli.out)?;
    out.write_json("config.json", &cfg)?;
    match &cli.command {
        Command::Sample => {
            let rows = commands::sample(&cfg, cli.count.unwrap_or(1), &out)?;
            eprintln!("sampled {} certified models into {}", rows.len(), out.path().display());
        }
        Command::Simulate { model } => {
            let doc = commands::load_model(model)?;
            commands::simulate(&cfg, &doc.model, cli.count.unwrap_or(cfg.dataset.realizations), &out)?;
        }
        Command::Moments { model } => {
            commands::moments(&cfg, &commands::load_model(model)?.model, &out)?;
        }
        Command::MakeData { model } => {
            commands::make_data(&cfg, &commands::load_model(model)?.model, &out)?;
        }
        Command::Infer { dataset, prior_only, baseline } => {
            let data = match (dataset, prior_only) {
                (_, true) => None,
                (Some(p), false) => Some(commands::load_dataset(p)?),
                (None, false) => return Err(CliError::Config("infer needs a dataset or --prior-only".into())),
            };
            let mode = if *baseline { InferMode::Baseline } else { InferMode::Parametrized };
            let o = commands::infer(&cfg, data.as_ref(), mode, &out)?;
            eprintln!("acceptance rate {:.3}, unstable retained draws {}", o.chain.acceptance_rate(), o.stability.unstable);
        }
        Command::Reproduce => {
            let r = commands::reproduce(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Verify { .. } | Command::Config => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
