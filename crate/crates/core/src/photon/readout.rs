use log::info;
use serde::{Deserialize, Serialize};

use super::herald::{EMISSION, SHUTTER, SHUTTER_LOSS};
use crate::engine::{evolve_master, no_jump_evolution, Coefficient, MasterSolution, OpenModel, TimeGrid};
use crate::error::{Result, SimError};
use crate::fock::{Layout, ModeOperators, StateVector, UnitTag, C64};
use crate::schedule::Schedule;

/// Label of the emission channel of the reduced and ideal models.
pub const EMISSION_LOSS: &str = "out";
/// Tolerance on the left-Riemann normalization of a target.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Coefficient of the `a_e^dag a_e` phase term in the reduced readout model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// `4 g^2 Delta / (4 Delta^2 + kappa^2)`.
    #[default]
    Standard,
    /// `2 g^2 Delta`, linear in the detuning.
    Linear,
}

/// Prefactor `c` of the reduced emission rate `c g^2 kappa / (4 Delta^2 + kappa^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateConvention {
    /// `c = 2`; the maximum rate is `2 g^2 / kappa`.
    #[default]
    Nominal,
    /// `c = 4`, what eliminating the shutter mode from the full model gives
    /// (and `4 g^2 / kappa` at zero detuning).
    Eliminated,
}

impl RateConvention {
    pub fn prefactor(self) -> f64 {
        match self {
            RateConvention::Nominal => 2.0,
            RateConvention::Eliminated => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutParams {
    pub g: f64,
    pub kappa_sc: f64,
    #[serde(default)]
    pub phase_mode: PhaseMode,
    #[serde(default)]
    pub rate_convention: RateConvention,
    pub n_e: usize,
    pub n_b: usize,
}

impl ReadoutParams {
    /// Default conventions with the smallest truncations that hold one photon safely.
    pub fn new(g: f64, kappa_sc: f64) -> Self {
        Self { g, kappa_sc, phase_mode: PhaseMode::Standard, rate_convention: RateConvention::Nominal, n_e: 4, n_b: 4 }
    }

    /// Reduced emission rate at detuning `delta`.
    pub fn rate(&self, delta: f64) -> f64 {
        self.rate_convention.prefactor() * self.g * self.g * self.kappa_sc / (4.0 * delta * delta + self.kappa_sc * self.kappa_sc)
    }

    /// Rate at zero detuning, the largest available.
    pub fn max_rate(&self) -> f64 {
        self.rate(0.0)
    }

    /// Detuning realizing `rate < max_rate`.
    pub fn detuning_for(&self, rate: f64) -> f64 {
        let c = self.rate_convention.prefactor();
        0.5 * (c * self.g * self.g * self.kappa_sc / rate - self.kappa_sc * self.kappa_sc).sqrt()
    }

    fn phase(&self, d: f64) -> f64 {
        let (g, k) = (self.g, self.kappa_sc);
        match self.phase_mode {
            PhaseMode::Standard => 4.0 * g * g * d / (4.0 * d * d + k * k),
            PhaseMode::Linear => 2.0 * g * g * d,
        }
    }
}

/// Full: `H = Delta(t) b^dag b + g (a_e b^dag + h.c.)`, `L = sqrt(kappa_sc) b` on modes `e, b`.
/// Reduced: `L = sqrt(rate(Delta)) a_e` plus a phase term on mode `e`.
pub fn readout_model(p: &ReadoutParams, delta: &Schedule, reduced: bool) -> Result<OpenModel> {
    if !delta.is_real() {
        return Err(SimError::InvalidArgument("detuning schedule must be real".into()));
    }
    if reduced {
        let layout = Layout::single(EMISSION, p.n_e)?;
        let e = ModeOperators::on(&layout, EMISSION)?;
        let amp = delta.map_real("sqrt_rate", UnitTag::SqrtRate, |d| p.rate(d).sqrt());
        let phase = delta.map_real("phase", UnitTag::Rate, |d| p.phase(d));
        return OpenModel::new(layout)
            .with_term(e.n.clone(), Coefficient::Scheduled(phase))?
            .with_scheduled_channel(EMISSION_LOSS, e.a, Coefficient::Scheduled(amp));
    }
    let layout = Layout::new([(EMISSION, p.n_e), (SHUTTER, p.n_b)])?;
    let e = ModeOperators::on(&layout, EMISSION)?;
    let b = ModeOperators::on(&layout, SHUTTER)?;
    let swap = e.a.compose(&b.a_dag)?;
    OpenModel::new(layout)
        .with_term(b.n.clone(), Coefficient::Scheduled(delta.clone()))?
        .with_hamiltonian(swap.plus(&swap.adjoint())?.scaled_real(p.g))?
        .with_channel(SHUTTER_LOSS, b.a.scaled_real(p.kappa_sc.sqrt()))
}

/// `L = sqrt(lambda(t)) a_e`: an emitter whose decay rate is set directly.
pub fn ideal_emitter_model(lambda: &Schedule, n_e: usize) -> Result<OpenModel> {
    let layout = Layout::single(EMISSION, n_e)?;
    let e = ModeOperators::on(&layout, EMISSION)?;
    let amp = lambda.map_real("sqrt_rate", UnitTag::SqrtRate, |l| l.max(0.0).sqrt());
    OpenModel::new(layout).with_scheduled_channel(EMISSION_LOSS, e.a, Coefficient::Scheduled(amp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingOptions {
    /// Largest detuning used where the target demands almost no emission.
    pub max_detuning: f64,
}

impl ShapingOptions {
    pub fn for_kappa(kappa_sc: f64) -> Self {
        Self { max_detuning: 100.0 * kappa_sc }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipEvent {
    pub t: f64,
    pub demanded: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shaping {
    /// Demanded emission rate.
    pub lambda: Schedule,
    pub delta: Schedule,
    /// Rate actually realized by `delta`.
    pub realized: Schedule,
    pub clips: Vec<ClipEvent>,
    pub max_rate: f64,
}

/// `sum_k |xi_k|^2 dt`.
pub fn left_riemann_mass(xi: &Schedule) -> f64 {
    xi.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * xi.dt
}

/// Detuning schedule that makes the reduced readout model emit `|xi(t)|^2`.
///
/// The demanded rate on `[t_k, t_k + dt)` is `ln(L_k / R_k) / dt`, with `R_k`
/// the right-Riemann tail mass after `t_k` and `L_k = R_k + |xi_k|^2 dt`, which
/// tends to `|xi|^2 / int_t^inf |xi|^2`. Where it exceeds the zero-detuning
/// rate the detuning is clipped to zero and the event logged.
pub fn shaping_schedule(xi: &Schedule, p: &ReadoutParams, opts: &ShapingOptions) -> Result<Shaping> {
    let mass = left_riemann_mass(xi);
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(SimError::InvalidArgument(format!("target pulse has norm {mass:.9}, expected 1")));
    }
    let dt = xi.dt;
    let f: Vec<f64> = xi.values.iter().map(|v| v.norm_sqr()).collect();
    let n = f.len();
    let mut tail = vec![0.0; n];
    for k in (0..n.saturating_sub(1)).rev() {
        tail[k] = tail[k + 1] + f[k + 1] * dt;
    }
    let max_rate = p.max_rate();
    let mut lambda = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut clips = Vec::new();
    for k in 0..n {
        let r = tail[k];
        let l = r + f[k] * dt;
        let lam = if l <= 0.0 {
            0.0
        } else if r <= 0.0 {
            f64::INFINITY
        } else {
            (l / r).ln() / dt
        };
        lambda.push(lam);
        if lam >= max_rate {
            if l > 0.0 {
                clips.push(ClipEvent { t: xi.time(k), demanded: lam, max_rate });
            }
            delta.push(0.0);
        } else if lam <= 0.0 {
            delta.push(opts.max_detuning);
        } else {
            delta.push(p.detuning_for(lam).min(opts.max_detuning));
        }
    }
    if !clips.is_empty() {
        info!(
            "pulse shaping: {} grid points demand a rate above the maximum {max_rate} (first at t = {})",
            clips.len(),
            clips[0].t
        );
    }
    let lambda = Schedule::new("lambda", xi.t0, dt, lambda.into_iter().map(|l| C64::new(l, 0.0)).collect(), UnitTag::Rate)?;
    let delta = Schedule::from_real("delta", xi.t0, dt, &delta, UnitTag::Rate)?;
    let realized = delta.map_real("rate", UnitTag::Rate, |d| p.rate(d));
    Ok(Shaping { lambda, delta, realized, clips, max_rate })
}

/// `sum_j <L_j^dag L_j>(t)` along a master solution: the photon emission density.
pub fn emission_density(model: &OpenModel, sol: &MasterSolution) -> Result<Vec<f64>> {
    sol.times
        .iter()
        .zip(&sol.states)
        .map(|(&t, rho)| {
            let mut total = 0.0;
            for l in model.channel_ops_at(t) {
                total += ((l.adjoint() * &l) * rho.entries()).trace().re;
            }
            Ok(total)
        })
        .collect()
}

/// Runs a readout model from `|1_e>` (shutter empty) and returns the emission density.
pub fn emission_from_single_photon(model: &OpenModel, grid: &TimeGrid) -> Result<(MasterSolution, Vec<f64>)> {
    let occ: Vec<usize> = model.layout().modes().iter().map(|m| usize::from(m.label == EMISSION)).collect();
    let rho0 = StateVector::fock(model.layout(), &occ)?.to_density();
    let sol = evolve_master(model, &rho0, grid)?;
    let d = emission_density(model, &sol)?;
    Ok((sol, d))
}

/// Emission density of a model that can emit at most once from `|1_e>`:
/// `sum_j ||L_j psi~(t)||^2` along the unnormalized no-jump state. Exact for
/// both readout models, since every emission leaves the vacuum.
pub fn single_photon_emission(model: &OpenModel, grid: &TimeGrid) -> Result<Vec<f64>> {
    let occ: Vec<usize> = model.layout().modes().iter().map(|m| usize::from(m.label == EMISSION)).collect();
    let psi0 = StateVector::fock(model.layout(), &occ)?;
    let states = no_jump_evolution(model, &psi0, grid.end() - grid.t0, grid.dt)?;
    Ok(states
        .iter()
        .map(|(t, s)| model.channel_ops_at(*t).iter().map(|l| (l * s.amplitudes()).norm_squared()).sum())
        .collect())
}

/// Target pulse on a grid, normalized so that its left-Riemann mass is exactly one.
pub fn discrete_target(label: &str, dt: f64, horizon: f64, intensity: impl Fn(f64) -> f64) -> Result<Schedule> {
    let n = crate::engine::steps_for(horizon, dt)? + 1;
    let f: Vec<f64> = (0..n).map(|k| intensity(dt * k as f64).max(0.0)).collect();
    let mass: f64 = f.iter().sum::<f64>() * dt;
    if !(mass > 0.0) {
        return Err(SimError::InvalidArgument("target pulse with zero intensity".into()));
    }
    let amps: Vec<C64> = f.iter().map(|v| C64::new((v / mass).sqrt(), 0.0)).collect();
    Schedule::new(label, 0.0, dt, amps, UnitTag::SqrtRate)
}

/// `|xi|^2` Gaussian with the given center and width.
pub fn gaussian_target(center: f64, sigma: f64, dt: f64, horizon: f64) -> Result<Schedule> {
    discrete_target("xi_gaussian", dt, horizon, |t| (-(t - center).powi(2) / (2.0 * sigma * sigma)).exp())
}

/// `|xi|^2 ∝ exp(t / tau)` up to `cutoff`, zero after.
pub fn rising_exponential_target(tau: f64, cutoff: f64, dt: f64, horizon: f64) -> Result<Schedule> {
    discrete_target("xi_rising", dt, horizon, |t| if t < cutoff - 1e-9 * dt { (t / tau).exp() } else { 0.0 })
}

/// `|xi|^2 ∝ exp(-rate t)`.
pub fn decaying_exponential_target(rate: f64, dt: f64, horizon: f64) -> Result<Schedule> {
    discrete_target("xi_decaying", dt, horizon, |t| (-rate * t).exp())
}

/// Agreement of an emission density with its target on the target grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseError {
    pub peak: f64,
    /// `sqrt(int (d - f)^2 dt) / max f`.
    pub l2_over_peak: f64,
    /// Root-mean-square difference over the grid divided by `max f`.
    pub rms_over_peak: f64,
    /// `max |d - f| / max f`.
    pub sup_over_peak: f64,
    pub emitted: f64,
}

pub fn pulse_error(target: &[f64], density: &[f64], dt: f64) -> PulseError {
    let peak = target.iter().cloned().fold(0.0, f64::max);
    let n = target.len().min(density.len());
    let sq: f64 = (0..n).map(|k| (density[k] - target[k]).powi(2)).sum();
    let sup = (0..n).map(|k| (density[k] - target[k]).abs()).fold(0.0, f64::max);
    PulseError {
        peak,
        l2_over_peak: (sq * dt).sqrt() / peak,
        rms_over_peak: (sq / n as f64).sqrt() / peak,
        sup_over_peak: sup / peak,
        emitted: density[..n].iter().sum::<f64>() * dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_limits() {
        let p = ReadoutParams::new(100.0, 1000.0);
        assert!((p.max_rate() - 20.0).abs() < 1e-12);
        assert!(p.rate(1e9) < 1e-10);
        assert!((p.rate(p.detuning_for(3.0)) - 3.0).abs() < 1e-12);
        let e = ReadoutParams { rate_convention: RateConvention::Eliminated, ..p };
        assert!((e.max_rate() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_target_rejected() {
        let xi = Schedule::from_real("xi", 0.0, 0.1, &[1.0, 1.0], UnitTag::SqrtRate).unwrap();
        assert!(shaping_schedule(&xi, &ReadoutParams::new(100.0, 1000.0), &ShapingOptions::for_kappa(1000.0)).is_err());
    }

    #[test]
    fn decaying_target_gives_constant_rate() {
        let lam0 = 2.0;
        let xi = decaying_exponential_target(lam0, 0.01, 20.0).unwrap();
        let s = shaping_schedule(&xi, &ReadoutParams::new(100.0, 1000.0), &ShapingOptions::for_kappa(1000.0)).unwrap();
        let peak = xi.values[0].norm_sqr();
        for (k, v) in xi.values.iter().enumerate() {
            if v.norm_sqr() >= 1e-6 * peak {
                assert!((s.lambda.values[k].re - lam0).abs() < 1e-6, "t = {}", xi.time(k));
            }
        }
        assert!(s.clips.iter().all(|c| c.t > 19.0));
    }

    #[test]
    fn unclipped_delta_realizes_demanded_rate() {
        let xi = gaussian_target(1.0, 0.2, 0.01, 2.0).unwrap();
        let s = shaping_schedule(&xi, &ReadoutParams::new(100.0, 1000.0), &ShapingOptions { max_detuning: f64::INFINITY }).unwrap();
        for k in 0..xi.len() {
            let lam = s.lambda.values[k].re;
            if lam > 0.0 && lam < s.max_rate {
                assert!((s.realized.values[k].re - lam).abs() < 1e-9 * lam.max(1.0));
            }
        }
    }

    #[test]
    fn zero_detuning_decay() {
        let (g, kappa) = (10.0, 100.0);
        let delta = Schedule::from_real("delta", 0.0, 0.01, &[0.0], UnitTag::Rate).unwrap();
        let m = readout_model(&ReadoutParams::new(g, kappa), &delta, true).unwrap();
        let grid = TimeGrid::span(1.0, 0.01).unwrap();
        let (_, d) = emission_from_single_photon(&m, &grid).unwrap();
        let rate = 2.0 * g * g / kappa;
        for (k, v) in d.iter().enumerate() {
            let t = grid.time(k);
            assert!((v - rate * (-rate * t).exp()).abs() < 1e-6);
        }
        let pure = single_photon_emission(&m, &grid).unwrap();
        for (a, b) in pure.iter().zip(&d) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
