use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t0, t0 + dt, …, t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl TimeGrid {
    /// The span must be an integer number of steps (to 1e-9 relative).
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid grid t0={t0}, t1={t1}, dt={dt}")));
        }
        let steps = (t1 - t0) / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidConfig(format!("span {} is not a multiple of dt = {dt}", t1 - t0)));
        }
        Ok(Self { t0, t1, dt })
    }

    pub fn steps(&self) -> usize {
        ((self.t1 - self.t0) / self.dt).round() as usize
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the node at `t`, if `t` is a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        if (x - i).abs() <= 1e-7 && i >= 0.0 && (i as usize) < self.len() {
            Some(i as usize)
        } else {
            None
        }
    }

    /// `count` nodes equally spaced over `(t0, t_end]`, snapped to the grid.
    pub fn measurement_indices(&self, t_end: f64, count: usize) -> Result<Vec<usize>> {
        let last = self
            .index_of(t_end)
            .ok_or_else(|| Error::InvalidConfig(format!("t = {t_end} is not a grid node")))?;
        if count == 0 || count > last {
            return Err(Error::InvalidConfig(format!("cannot place {count} measurements on {last} steps")));
        }
        let mut idx: Vec<usize> = (1..=count).map(|k| (k as f64 * last as f64 / count as f64).round() as usize).collect();
        idx.dedup();
        Ok(idx)
    }
}
