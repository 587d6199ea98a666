use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::GeneratorCache;
use super::OpenModel;
use crate::error::{Result, SimError};
use crate::fock::{check_tails, DensityMatrix, ModeOperator, C64, TAIL_GUARD};

/// Uniform grid `t0 + k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::InvalidArgument(format!("grid step must be positive, got {dt}")));
        }
        Ok(Self { t0, dt, steps })
    }

    /// `[0, horizon]` in steps of `dt`; `horizon` must be a multiple of `dt`.
    pub fn span(horizon: f64, dt: f64) -> Result<Self> {
        Self::new(0.0, dt, steps_for(horizon, dt)?)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }
}

/// Number of `dt` steps covering `horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(SimError::InvalidArgument(format!("need dt > 0 and horizon >= 0, got dt={dt}, horizon={horizon}")));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(SimError::InvalidArgument(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterOptions {
    /// Successive refinements must agree to this in max-entry norm.
    pub tolerance: f64,
    /// Largest number of RK4 substeps per grid interval.
    pub max_substeps: usize,
    /// Tail-population guard; `None` disables the check.
    pub tail_guard: Option<f64>,
    pub trace_tolerance: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_substeps: 1 << 16, tail_guard: Some(TAIL_GUARD), trace_tolerance: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// RK4 substeps per grid interval of the accepted run.
    pub substeps: usize,
    /// Max-entry difference to the previous refinement.
    pub refinement_delta: f64,
    pub max_trace_drift: f64,
}

impl MasterSolution {
    pub fn expectations(&self, op: &ModeOperator) -> Result<Vec<f64>> {
        self.states.iter().map(|r| Ok(r.expectation(op)?.re)).collect()
    }

    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("grid has at least one point")
    }
}

const BLOWUP: f64 = 1e3;

pub fn evolve_master(model: &OpenModel, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<MasterSolution> {
    evolve_master_with(model, rho0, grid, &MasterOptions::default())
}

/// Fixed-step RK4, doubling the substeps per grid interval until two successive
/// runs agree at every grid point.
pub fn evolve_master_with(
    model: &OpenModel,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    opts: &MasterOptions,
) -> Result<MasterSolution> {
    model.layout().ensure_same(rho0.layout(), "master equation initial state")?;
    let mut cache = GeneratorCache::new(model);
    let mut previous: Option<Vec<DMatrix<C64>>> = None;
    let mut substeps = 1usize;
    let mut last_delta = f64::INFINITY;
    while substeps <= opts.max_substeps {
        let run = rk4_run(&mut cache, rho0.entries(), grid, substeps);
        match (run, previous.take()) {
            (Some(cur), Some(prev)) => {
                let delta = cur
                    .iter()
                    .zip(&prev)
                    .map(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max))
                    .fold(0.0, f64::max);
                debug!("master: {substeps} substeps, delta {delta:.3e}");
                last_delta = delta;
                if delta < opts.tolerance {
                    return finish(rho0, grid, cur, substeps, delta, opts);
                }
                previous = Some(cur);
            }
            (Some(cur), None) => previous = Some(cur),
            (None, _) => debug!("master: {substeps} substeps unstable"),
        }
        substeps *= 2;
    }
    Err(SimError::NotConverged(format!(
        "RK4 refinements still differ by {last_delta:.3e} at {} substeps per interval",
        opts.max_substeps
    )))
}

fn finish(
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    snaps: Vec<DMatrix<C64>>,
    substeps: usize,
    delta: f64,
    opts: &MasterOptions,
) -> Result<MasterSolution> {
    let times = grid.times();
    let mut states = Vec::with_capacity(snaps.len());
    let mut drift = 0.0f64;
    for (m, &t) in snaps.into_iter().zip(&times) {
        let rho = DensityMatrix::new(rho0.layout().clone(), m)?;
        drift = drift.max((rho.trace() - rho0.trace()).norm());
        if let Some(th) = opts.tail_guard {
            check_tails(rho.tail_report(), th, Some(t))?;
        }
        states.push(rho);
    }
    if drift > opts.trace_tolerance {
        return Err(SimError::NotConverged(format!("trace drift {drift:.3e}")));
    }
    Ok(MasterSolution { times, states, substeps, refinement_delta: delta, max_trace_drift: drift })
}

/// `y += a x` over the raw storage.
fn axpy(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// One RK4 pass; `None` if the solution blows up.
fn rk4_run(cache: &mut GeneratorCache, rho0: &DMatrix<C64>, grid: &TimeGrid, substeps: usize) -> Option<Vec<DMatrix<C64>>> {
    let d = rho0.nrows();
    let h = grid.dt / substeps as f64;
    let mut rho = rho0.clone();
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(rho.clone());
    let z = || DMatrix::<C64>::zeros(d, d);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp, mut scratch) = (z(), z(), z(), z(), z(), z());
    let c = |x: f64| C64::new(x, 0.0);
    for step in 0..grid.steps {
        for sub in 0..substeps {
            let t = grid.time(step) + h * sub as f64;
            let g = cache.at(t);
            g.lindblad_into(&rho, &mut k1, &mut scratch);
            tmp.copy_from(&rho);
            axpy(&mut tmp, c(h / 2.0), &k1);
            g.lindblad_into(&tmp, &mut k2, &mut scratch);
            tmp.copy_from(&rho);
            axpy(&mut tmp, c(h / 2.0), &k2);
            g.lindblad_into(&tmp, &mut k3, &mut scratch);
            tmp.copy_from(&rho);
            axpy(&mut tmp, c(h), &k3);
            g.lindblad_into(&tmp, &mut k4, &mut scratch);
            k2 += &k3;
            k1 += &k4;
            axpy(&mut rho, c(h / 6.0), &k1);
            axpy(&mut rho, c(h / 3.0), &k2);
        }
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > BLOWUP) {
            return None;
        }
        out.push(rho.clone());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::lindblad_derivative_at;
    use crate::fock::{mode_operators, StateVector};

    #[test]
    fn sparse_generator_matches_dense_formula() {
        let ops = mode_operators(6).unwrap();
        let h = ops.n.scaled_real(0.7).plus(&ops.x.scaled_real(0.3)).unwrap();
        let model = OpenModel::new(ops.a.layout().clone())
            .with_hamiltonian(h)
            .unwrap()
            .with_channel("a", ops.a.scaled_real(1.3))
            .unwrap()
            .with_channel("ad", ops.a_dag.scaled_real(0.4))
            .unwrap();
        let psi = StateVector::new(
            ops.a.layout().clone(),
            nalgebra::DVector::from_fn(6, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.1 * i as f64)),
        )
        .unwrap()
        .normalize()
        .unwrap();
        let rho = psi.to_density();
        let dense = lindblad_derivative_at(&model, &rho, 0.0).unwrap();
        let mut out = DMatrix::zeros(6, 6);
        let mut scratch = DMatrix::zeros(6, 6);
        model.generator_at(0.0).lindblad_into(rho.entries(), &mut out, &mut scratch);
        assert!((out - dense.entries()).norm() < 1e-12);
    }

    #[test]
    fn photon_decay_is_exponential() {
        let ops = mode_operators(4).unwrap();
        let kappa: f64 = 1.7;
        let model = OpenModel::new(ops.a.layout().clone()).with_channel("L", ops.a.scaled_real(kappa.sqrt())).unwrap();
        let rho0 = StateVector::fock(ops.a.layout(), &[1]).unwrap().to_density();
        let grid = TimeGrid::span(2.0, 0.1).unwrap();
        let sol = evolve_master(&model, &rho0, &grid).unwrap();
        for (t, n) in sol.times.iter().zip(sol.expectations(&ops.n).unwrap()) {
            assert!((n - (-kappa * t).exp()).abs() < 1e-6);
        }
        assert!(sol.max_trace_drift < 1e-7);
    }

    #[test]
    fn tail_violation_reports_time() {
        let ops = mode_operators(5).unwrap();
        let model = OpenModel::new(ops.a.layout().clone()).with_channel("gain", ops.a_dag.scaled_real(2.0)).unwrap();
        let rho0 = StateVector::vacuum(ops.a.layout()).to_density();
        let grid = TimeGrid::span(1.0, 0.05).unwrap();
        match evolve_master(&model, &rho0, &grid) {
            Err(SimError::TruncationUnsafe { at: Some(t), .. }) => assert!(t > 0.0 && t <= 1.0),
            other => panic!("expected truncation abort, got {other:?}"),
        }
    }

    #[test]
    fn horizon_must_be_multiple() {
        assert!(TimeGrid::span(1.0, 0.3).is_err());
        assert_eq!(TimeGrid::span(1.0, 0.1).unwrap().steps, 10);
    }
}
