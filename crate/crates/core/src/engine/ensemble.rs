use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{StreamKey, TrajectoryRecord, TrajectorySimulator};
use crate::error::{Result, SimError};
use crate::fock::{ModeOperator, StateVector};

/// Environment variable naming the worker count.
pub const WORKERS_ENV: &str = "SIM_WORKERS";

/// Worker count from `SIM_WORKERS`, else the number of logical processors.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Maps `f` over `0..n` on a pool of `workers` threads; output is in index order.
pub fn par_map_with<T: Send>(workers: usize, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    par_map_with(worker_count(), n, f)
}

/// `n` stream keys `(seed, 0..n)`.
pub fn stream_keys(seed: u64, n: usize) -> Vec<StreamKey> {
    (0..n as u64).map(|i| StreamKey::new(seed, i)).collect()
}

/// Runs one trajectory per key; the first failure (in key order) is returned
/// with its seed and stream attached.
pub fn ensemble_run(sim: &TrajectorySimulator, psi0: &StateVector, keys: &[StreamKey]) -> Result<Vec<TrajectoryRecord>> {
    ensemble_run_with(worker_count(), sim, psi0, keys)
}

pub fn ensemble_run_with(
    workers: usize,
    sim: &TrajectorySimulator,
    psi0: &StateVector,
    keys: &[StreamKey],
) -> Result<Vec<TrajectoryRecord>> {
    par_map_with(workers, keys.len(), |i| {
        let key = keys[i];
        sim.run(psi0, key).map_err(|e| SimError::Trajectory { seed: key.seed, stream: key.stream, source: Box::new(e) })
    })
    .into_iter()
    .collect()
}

/// Per-snapshot ensemble mean of an observable with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub observable: String,
    pub count: usize,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl EnsembleSummary {
    pub fn from_records(records: &[TrajectoryRecord], op: &ModeOperator, observable: &str) -> Result<Self> {
        let first = records.first().ok_or_else(|| SimError::InvalidArgument("empty ensemble".into()))?;
        let m = first.snapshots.len();
        if records.iter().any(|r| r.snapshots.len() != m) {
            return Err(SimError::InvalidArgument("trajectories have differing snapshot counts".into()));
        }
        let n = records.len() as f64;
        let mut mean = vec![0.0; m];
        let mut sq = vec![0.0; m];
        for r in records {
            for (k, s) in r.snapshots.iter().enumerate() {
                let v = s.state.expectation(op)?.re;
                mean[k] += v;
                sq[k] += v * v;
            }
        }
        let mut std_err = vec![0.0; m];
        for k in 0..m {
            mean[k] /= n;
            let var = if n > 1.0 { ((sq[k] / n - mean[k] * mean[k]) * n / (n - 1.0)).max(0.0) } else { 0.0 };
            std_err[k] = (var / n).sqrt();
        }
        Ok(Self {
            observable: observable.into(),
            count: records.len(),
            times: first.snapshots.iter().map(|s| s.time).collect(),
            mean,
            std_err,
        })
    }

    /// CSV with columns `t[1/gamma], mean, std_err`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t[1/gamma]", &format!("mean_{}", self.observable), "std_err"])?;
        for k in 0..self.times.len() {
            wtr.write_record([self.times[k].to_string(), self.mean[k].to_string(), self.std_err[k].to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
