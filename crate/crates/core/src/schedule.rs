//! Piecewise-constant time functions on a uniform grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fock::{UnitTag, C64};

/// Samples `values[k]` hold on `[t0 + k dt, t0 + (k+1) dt)`; the last sample
/// extends to infinity and times before `t0` use the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub label: String,
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<C64>,
    pub unit: UnitTag,
}

impl Schedule {
    pub fn new(label: impl Into<String>, t0: f64, dt: f64, values: Vec<C64>, unit: UnitTag) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidArgument(format!("schedule step must be positive, got {dt}")));
        }
        if values.is_empty() {
            return Err(SimError::InvalidArgument("schedule with no samples".into()));
        }
        Ok(Self { label: label.into(), t0, dt, values, unit })
    }

    pub fn from_real(label: impl Into<String>, t0: f64, dt: f64, values: &[f64], unit: UnitTag) -> Result<Self> {
        Self::new(label, t0, dt, values.iter().map(|&v| C64::new(v, 0.0)).collect(), unit)
    }

    /// Samples `f(t0 + k dt)` for `k = 0..len`.
    pub fn sample(
        label: impl Into<String>,
        t0: f64,
        dt: f64,
        len: usize,
        unit: UnitTag,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let v: Vec<f64> = (0..len).map(|k| f(t0 + dt * k as f64)).collect();
        Self::from_real(label, t0, dt, &v, unit)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Index of the sample in force at `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let x = ((t - self.t0) / self.dt + 1e-9).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.len() - 1)
        }
    }

    pub fn at(&self, t: f64) -> C64 {
        self.values[self.index_at(t)]
    }

    pub fn real_at(&self, t: f64) -> f64 {
        self.at(t).re
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn map_real(&self, label: impl Into<String>, unit: UnitTag, f: impl Fn(f64) -> f64) -> Self {
        Self {
            label: label.into(),
            t0: self.t0,
            dt: self.dt,
            values: self.values.iter().map(|v| C64::new(f(v.re), 0.0)).collect(),
            unit,
        }
    }

    /// Reads a CSV with columns `t, value_re[, value_im]`. Times must be uniform.
    pub fn read_csv(path: &Path, label: &str, unit: UnitTag) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| SimError::Config(format!("{}: row with too few columns", path.display())))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
            };
            ts.push(field(0)?);
            let im = if rec.len() > 2 { field(2)? } else { 0.0 };
            vs.push(C64::new(field(1)?, im));
        }
        if ts.len() < 2 {
            return Err(SimError::Config(format!("{}: need at least two samples", path.display())));
        }
        let dt = ts[1] - ts[0];
        for (k, t) in ts.iter().enumerate() {
            if (t - (ts[0] + dt * k as f64)).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(SimError::Config(format!("{}: time grid not uniform at row {k}", path.display())));
            }
        }
        Self::new(label, ts[0], dt, vs, unit)
    }
}
