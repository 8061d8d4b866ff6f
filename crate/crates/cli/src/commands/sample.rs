use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stable_ssm::matfound::spectral_abscissa;
use stable_ssm::priors::RngStream;

use super::{draw_model, model_document, streams};
use crate::checks::certify_brl;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::OutDir;

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub brl_max_eig: f64,
    pub spectral_abscissa: f64,
    pub ms_abscissa: f64,
    pub a_frobenius: f64,
    pub lyapunov_residual: f64,
    pub certified: bool,
}

/// Draws `count` models from the generation prior, writes `model_<i>.json`
/// and `summary.csv`, and fails with a certificate error if any draw does
/// not pass its own certificate.
pub fn sample(cfg: &RunConfig, count: usize, out: &OutDir) -> CliResult<Vec<SampleRow>> {
    let stream = RngStream::new(cfg.seed, streams::SAMPLE);
    let draws: Vec<CliResult<_>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (params, ssm, p) = draw_model(&cfg.generation, stream.child(i as u64))?;
            let rep = certify_brl(&ssm, &p, &params)?;
            let row = SampleRow {
                index: i,
                brl_max_eig: rep.brl_max_eig.unwrap_or(f64::NAN),
                spectral_abscissa: spectral_abscissa(&ssm.a)?,
                ms_abscissa: rep.ms_abscissa,
                a_frobenius: ssm.a.norm(),
                lyapunov_residual: rep.lyapunov_residual.unwrap_or(f64::NAN),
                certified: rep.passed,
            };
            Ok((model_document(params, ssm, p), row))
        })
        .collect();
    let width = count.saturating_sub(1).to_string().len().max(5);
    let mut rows = Vec::with_capacity(count);
    for d in draws {
        let (doc, row) = d?;
        out.write_json(&format!("model_{:0width$}.json", row.index), &doc)?;
        rows.push(row);
    }
    out.write_with("summary.csv", |w| {
        use std::io::Write;
        writeln!(w, "index,brl_max_eig,spectral_abscissa,ms_abscissa,a_frobenius,lyapunov_residual,certified")?;
        for r in &rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{}",
                r.index, r.brl_max_eig, r.spectral_abscissa, r.ms_abscissa, r.a_frobenius, r.lyapunov_residual, r.certified
            )?;
        }
        Ok(())
    })?;
    let failed = rows.iter().filter(|r| !r.certified).count();
    if failed > 0 {
        return Err(CliError::Certificate(format!("{failed} of {count} sampled models failed their certificate")));
    }
    Ok(rows)
}
