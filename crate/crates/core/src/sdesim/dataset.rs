use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::rows_serde;
use crate::param::Ssm;
use crate::priors::RngStream;
use crate::sdesim::ensemble::ensemble_outputs;
use crate::sdesim::{make_fourier_input, InputSignal, TimeGrid};

/// Noisy measurements of `M` independent realizations sharing `x₀` and `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub grid: TimeGrid,
    pub input: InputSignal,
    /// Grid nodes at which outputs are measured.
    pub meas_idx: Vec<usize>,
    pub times: Vec<f64>,
    /// `u(t_i)`, `ℓ × N`.
    #[serde(with = "rows_serde")]
    pub inputs: DMatrix<f64>,
    /// One `q × N` matrix per realization.
    pub outputs: Vec<Outputs>,
    pub x0: Vec<f64>,
    pub sigma: f64,
    pub seed: RngStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outputs(#[serde(with = "rows_serde")] pub DMatrix<f64>);

impl Dataset {
    pub fn realizations(&self) -> usize {
        self.outputs.len()
    }

    /// Total number of scalar observations.
    pub fn observations(&self) -> usize {
        self.outputs.iter().map(|o| o.0.len()).sum()
    }
}

/// Simulates `M` paths, observes them at `meas_idx` with i.i.d. `N(0, σ²I)` noise.
#[allow(clippy::too_many_arguments)]
pub fn make_dataset(
    s: &Ssm,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    meas_idx: &[usize],
    realizations: usize,
    sigma: f64,
    stream: RngStream,
) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma = {sigma} must be non-negative")));
    }
    if meas_idx.is_empty() || meas_idx.windows(2).any(|w| w[0] >= w[1]) || *meas_idx.last().unwrap() >= grid.len() {
        return Err(Error::InvalidConfig("measurement indices must be strictly increasing grid nodes".into()));
    }
    let q = s.dims().q;
    let n_meas = meas_idx.len();
    let rows = ensemble_outputs(s, x0, u, grid, meas_idx, realizations, stream.child(0))?;
    let mut noise_rng = stream.child(1).rng();
    let outputs = rows
        .into_iter()
        .map(|r| {
            let mut y = DMatrix::from_column_slice(q, n_meas, &r);
            for v in y.iter_mut() {
                *v += sigma * noise_rng.sample::<f64, _>(StandardNormal);
            }
            Outputs(y)
        })
        .collect();
    let mut inputs = DMatrix::zeros(u.channels(), n_meas);
    for (k, &i) in meas_idx.iter().enumerate() {
        inputs.column_mut(k).copy_from_slice(&u.eval(grid.time(i)));
    }
    Ok(Dataset {
        grid: *grid,
        input: u.clone(),
        meas_idx: meas_idx.to_vec(),
        times: meas_idx.iter().map(|&i| grid.time(i)).collect(),
        inputs,
        outputs,
        x0: x0.to_vec(),
        sigma,
        seed: stream,
    })
}

/// Statistical lower bound on the L²-gain: the largest ratio
/// `√(Σ_t E‖y‖² / Σ_t ‖u‖²)` over random Fourier inputs, `x₀ = 0`.
pub fn empirical_gain(s: &Ssm, grid: &TimeGrid, n_inputs: usize, n_paths: usize, stream: RngStream) -> Result<f64> {
    let d = s.dims();
    let record: Vec<usize> = (0..grid.len()).collect();
    let horizon = grid.t1 - grid.t0;
    let mut best: f64 = 0.0;
    for j in 0..n_inputs {
        let u = make_fourier_input(d.l, 6, horizon, &mut stream.child(2 * j as u64).rng())?;
        let rows = ensemble_outputs(s, &vec![0.0; d.n], &u, grid, &record, n_paths, stream.child(2 * j as u64 + 1))?;
        let mut y2 = 0.0;
        for r in &rows {
            y2 += r.iter().map(|v| v * v).sum::<f64>();
        }
        y2 /= n_paths as f64;
        let u2: f64 = record.iter().map(|&i| u.eval(grid.time(i)).iter().map(|v| v * v).sum::<f64>()).sum();
        if u2 > 0.0 {
            best = best.max((y2 / u2).sqrt());
        }
    }
    Ok(best)
}
