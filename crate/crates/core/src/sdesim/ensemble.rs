use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::rows_serde;
use crate::param::Ssm;
use crate::priors::RngStream;
use crate::sdesim::em::{simulate_outputs, Stepper};
use crate::sdesim::{InputCache, InputSignal, TimeGrid};

/// Per-node sample mean and unbiased variance of each output channel across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    /// `q × len`.
    #[serde(with = "rows_serde")]
    pub mean: DMatrix<f64>,
    #[serde(with = "rows_serde")]
    pub var: DMatrix<f64>,
    /// Standard error of `mean`.
    #[serde(with = "rows_serde")]
    pub mean_se: DMatrix<f64>,
    /// Standard error of `var`, from the fourth central moment.
    #[serde(with = "rows_serde")]
    pub var_se: DMatrix<f64>,
    pub paths: usize,
}

/// Raw per-path outputs at the recorded nodes, `paths × (len·q)` row-major.
pub(crate) fn ensemble_outputs(
    s: &Ssm,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    record: &[usize],
    paths: usize,
    stream: RngStream,
) -> Result<Vec<Vec<f64>>> {
    s.validate()?;
    let d = s.dims();
    if x0.len() != d.n || u.channels() != d.l {
        return Err(Error::DimensionMismatch("x0 or input does not match the model".into()));
    }
    let cache = InputCache::new(u, grid);
    let steps = grid.steps();
    let q = d.q;
    (0..paths)
        .into_par_iter()
        .map_init(
            || Stepper::new(s, &cache, grid.dt),
            |st, p| {
                let mut out = vec![0.0; record.len() * q];
                let mut rng = stream.child(p as u64).rng();
                simulate_outputs(st, x0, steps, grid.dt, record, &mut out, &mut rng)?;
                Ok(out)
            },
        )
        .collect()
}

/// Mean/variance summary from per-path records (fixed reduction order).
pub(crate) fn summarize(times: Vec<f64>, q: usize, rows: &[Vec<f64>]) -> Result<EnsembleSummary> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::InvalidConfig("an ensemble needs at least two paths".into()));
    }
    let len = times.len();
    let mut mean = DMatrix::zeros(q, len);
    let mut var = DMatrix::zeros(q, len);
    let mut mean_se = DMatrix::zeros(q, len);
    let mut var_se = DMatrix::zeros(q, len);
    let mf = m as f64;
    for t in 0..len {
        for c in 0..q {
            let idx = t * q + c;
            let mu = rows.iter().map(|r| r[idx]).sum::<f64>() / mf;
            let (mut s2, mut s4) = (0.0, 0.0);
            for r in rows {
                let e = r[idx] - mu;
                s2 += e * e;
                s4 += e * e * e * e;
            }
            let v = s2 / (mf - 1.0);
            let m2 = s2 / mf;
            let m4 = s4 / mf;
            mean[(c, t)] = mu;
            var[(c, t)] = v;
            mean_se[(c, t)] = (v / mf).sqrt();
            var_se[(c, t)] = ((m4 - m2 * m2).max(0.0) / mf).sqrt();
        }
    }
    Ok(EnsembleSummary { times, mean, var, mean_se, var_se, paths: m })
}

/// Monte-Carlo ensemble of output paths summarized at `record` nodes (all nodes when `None`).
/// Path `p` uses stream `stream.child(p)`, so results do not depend on the worker count.
pub fn simulate_ensemble(
    s: &Ssm,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    paths: usize,
    stream: RngStream,
    record: Option<&[usize]>,
) -> Result<EnsembleSummary> {
    if paths < 2 {
        return Err(Error::InvalidConfig("an ensemble needs at least two paths".into()));
    }
    let all: Vec<usize>;
    let record = match record {
        Some(r) => r,
        None => {
            all = (0..grid.len()).collect();
            &all
        }
    };
    if record.windows(2).any(|w| w[0] >= w[1]) || record.last().is_some_and(|&r| r >= grid.len()) {
        return Err(Error::InvalidConfig("record indices must be strictly increasing grid nodes".into()));
    }
    let rows = ensemble_outputs(s, x0, u, grid, record, paths, stream)?;
    summarize(record.iter().map(|&i| grid.time(i)).collect(), s.dims().q, &rows)
}

/// Writes rows `t,channel,stat,value` for every `(name, matrix)` pair (`channels × len`).
pub fn write_long_csv<W: Write>(w: &mut W, times: &[f64], series: &[(&str, &DMatrix<f64>)], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(w, "t,channel,stat,value")?;
    }
    for (i, t) in times.iter().enumerate() {
        for (name, m) in series {
            for c in 0..m.nrows() {
                writeln!(w, "{t},{c},{name},{}", m[(c, i)])?;
            }
        }
    }
    Ok(())
}

impl EnsembleSummary {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_long_csv(w, &self.times, &[("mean", &self.mean), ("var", &self.var)], true)
    }
}
