use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::engine::{evolve_master_with, par_map, MasterOptions, OpenModel, StreamKey, TailFlag, TimeGrid, MAX_STEP_PROBABILITY};
use crate::error::{Result, SimError};
use crate::fock::{Layout, ModeOperators, StateVector, UnitTag, C64, TAIL_GUARD};

/// Mode labels of the full heralding model, in layout order.
pub const EMISSION: &str = "e";
pub const HERALD: &str = "h";
pub const SHUTTER: &str = "b";
/// Label of the shutter-cavity loss channel.
pub const SHUTTER_LOSS: &str = "sc";
/// Label of the gain channel of the reduced model.
pub const GAIN: &str = "gain";
/// Multiphoton reporting stops at this emission-mode occupation.
pub const MAX_REPORTED_OCCUPATION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldTruncations {
    pub n_e: usize,
    pub n_h: usize,
    pub n_b: usize,
}

impl Default for HeraldTruncations {
    fn default() -> Self {
        Self { n_e: 24, n_h: 20, n_b: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldParams {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
    pub truncations: HeraldTruncations,
    /// Minimum ratio for each "much greater than" regime condition.
    pub regime_ratio: f64,
}

/// The regime conditions `g, kappa >> Lambda`, `kappa >> g`, `4 g^2/kappa >> Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub g_over_lambda: f64,
    pub kappa_over_lambda: f64,
    pub kappa_over_g: f64,
    pub omega_over_lambda: f64,
    pub satisfied: bool,
}

impl HeraldParams {
    pub fn new(lambda: f64, g: f64, kappa_sc: f64) -> Result<Self> {
        Self::with_truncations(lambda, g, kappa_sc, HeraldTruncations::default())
    }

    pub fn with_truncations(lambda: f64, g: f64, kappa_sc: f64, truncations: HeraldTruncations) -> Result<Self> {
        // Lambda = 0 is allowed: readout and oscillation checks switch the pump off
        if !(lambda >= 0.0) || !(g > 0.0) || !(kappa_sc > 0.0) {
            return Err(SimError::InvalidArgument(format!(
                "herald rates must be positive (Lambda={lambda}, g={g}, kappa_sc={kappa_sc})"
            )));
        }
        Ok(Self { lambda, g, kappa_sc, truncations, regime_ratio: 10.0 })
    }

    /// Effective gain `Lambda^2 kappa_sc / g^2`.
    pub fn gamma(&self) -> f64 {
        self.lambda * self.lambda * self.kappa_sc / (self.g * self.g)
    }

    /// `4 g^2 / kappa_sc`.
    pub fn omega(&self) -> f64 {
        4.0 * self.g * self.g / self.kappa_sc
    }

    pub fn regime(&self) -> RegimeReport {
        let r = RegimeReport {
            g_over_lambda: self.g / self.lambda,
            kappa_over_lambda: self.kappa_sc / self.lambda,
            kappa_over_g: self.kappa_sc / self.g,
            omega_over_lambda: self.omega() / self.lambda,
            satisfied: false,
        };
        let ok = [r.g_over_lambda, r.kappa_over_lambda, r.kappa_over_g, r.omega_over_lambda]
            .iter()
            .all(|&x| x >= self.regime_ratio);
        RegimeReport { satisfied: ok, ..r }
    }

    pub fn full_layout(&self) -> Result<Layout> {
        let t = self.truncations;
        Layout::new([(EMISSION, t.n_e), (HERALD, t.n_h), (SHUTTER, t.n_b)])
    }
}

/// Full: `H = Lambda (a_h a_e + h.c.) + g (a_h b^dag + h.c.)`, `L = sqrt(kappa_sc) b` on modes
/// `e, h, b`. Reduced: `H = 0`, `L = sqrt(gamma) a_e^dag` on mode `e`.
pub fn heralding_model(p: &HeraldParams, reduced: bool) -> Result<OpenModel> {
    if reduced {
        let layout = Layout::single(EMISSION, p.truncations.n_e)?;
        let e = ModeOperators::on(&layout, EMISSION)?;
        return OpenModel::new(layout).with_channel(GAIN, e.a_dag.scaled_real(p.gamma().sqrt()).with_unit(UnitTag::SqrtRate));
    }
    let layout = p.full_layout()?;
    let e = ModeOperators::on(&layout, EMISSION)?;
    let h = ModeOperators::on(&layout, HERALD)?;
    let b = ModeOperators::on(&layout, SHUTTER)?;
    let pair = h.a.compose(&e.a)?;
    let swap = h.a.compose(&b.a_dag)?;
    let hamiltonian = pair
        .plus(&pair.adjoint())?
        .scaled_real(p.lambda)
        .plus(&swap.plus(&swap.adjoint())?.scaled_real(p.g))?
        .with_unit(UnitTag::Rate);
    OpenModel::new(layout)
        .with_hamiltonian(hamiltonian)?
        .with_channel(SHUTTER_LOSS, b.a.scaled_real(p.kappa_sc.sqrt()).with_unit(UnitTag::SqrtRate))
}

/// A detection on the shutter loss channel and the state it heralds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldClick {
    pub time: f64,
    /// Post-click amplitudes by occupation `[n_e, n_h, n_b]`.
    pub amplitudes: Vec<([usize; 3], C64)>,
    /// `P(n_e = k)` for `k = 0..=4`.
    pub weights: Vec<f64>,
    /// `sqrt(<1|rho_e|1>)`.
    pub fidelity: f64,
    pub tail_flag: Option<TailFlag>,
}

impl HeraldClick {
    /// The post-click state on the full layout of `p`.
    pub fn state(&self, p: &HeraldParams) -> Result<StateVector> {
        let layout = p.full_layout()?;
        let mut v = DVector::<C64>::zeros(layout.dim());
        for (s, a) in &self.amplitudes {
            if s.iter().zip(layout.modes()).any(|(n, m)| *n >= m.dim) {
                return Err(SimError::LayoutMismatch(format!("occupation {s:?} outside {}", layout.describe())));
            }
            v[layout.index_of(s)] = *a;
        }
        StateVector::new(layout, v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeraldOutcome {
    Click(Box<HeraldClick>),
    NoClick,
}

/// No-jump propagator of the click sector plus the per-mode tail masks of the
/// sector before and after a click.
struct SectorStepper {
    basis: Vec<[usize; 3]>,
    step: DMatrix<C64>,
    tops: [usize; 3],
    kappa_sc: f64,
    dt: f64,
    steps: usize,
}

impl SectorStepper {
    fn new(p: &HeraldParams, t_max: f64, dt: f64) -> Result<Self> {
        let steps = crate::engine::steps_for(t_max, dt)?;
        let t = p.truncations;
        for (label, n) in [(EMISSION, t.n_e), (HERALD, t.n_h), (SHUTTER, t.n_b)] {
            if n < 2 {
                return Err(SimError::InvalidArgument(format!("mode `{label}` needs at least 2 levels")));
            }
        }
        let (basis, k) = click_sector(p);
        Ok(Self { basis, step: (k * C64::new(0.0, -dt)).exp(), tops: [t.n_e, t.n_h, t.n_b], kappa_sc: p.kappa_sc, dt, steps })
    }

    fn tail_check(&self, states: impl Iterator<Item = ([usize; 3], f64)> + Clone, t: f64) -> Option<TailFlag> {
        let labels = [EMISSION, HERALD, SHUTTER];
        (0..3).find_map(|m| {
            let tail: f64 = states.clone().filter(|(s, _)| s[m] + 2 >= self.tops[m]).map(|(_, w)| w).sum();
            (!(tail < TAIL_GUARD)).then(|| TailFlag { time: t, mode: labels[m].into(), tail })
        })
    }

    /// Same draws and step order as a trajectory of the full model stopped at its first jump.
    fn run(&self, key: StreamKey) -> Result<HeraldOutcome> {
        let mut rng = key.rng();
        let mut v = DVector::<C64>::zeros(self.basis.len());
        v[0] = C64::new(1.0, 0.0);
        let mut tail_flag = None;
        for step in 0..self.steps {
            let rate: f64 = self.basis.iter().zip(v.iter()).map(|(s, a)| s[2] as f64 * a.norm_sqr()).sum();
            let p = self.kappa_sc * rate * self.dt;
            if p >= MAX_STEP_PROBABILITY {
                return Err(SimError::StepTooCoarse { prob: p, limit: MAX_STEP_PROBABILITY });
            }
            let u: f64 = rng.random();
            let t_next = (step + 1) as f64 * self.dt;
            if u < p {
                return self.click(&v, t_next, tail_flag);
            }
            v = &self.step * &v;
            let n2 = v.norm_squared();
            if !(n2 > 1e-28) || !n2.is_finite() {
                return Err(SimError::NumericalDegeneracy(format!("state norm collapsed to {n2:.3e} at t = {t_next}")));
            }
            v.unscale_mut(n2.sqrt());
            if tail_flag.is_none() {
                tail_flag = self.tail_check(self.basis.iter().zip(v.iter()).map(|(s, a)| (*s, a.norm_sqr())), t_next);
            }
        }
        Ok(HeraldOutcome::NoClick)
    }

    fn click(&self, v: &DVector<C64>, time: f64, tail_flag: Option<TailFlag>) -> Result<HeraldOutcome> {
        let scale = self.kappa_sc.sqrt();
        let mut amplitudes: Vec<([usize; 3], C64)> = self
            .basis
            .iter()
            .zip(v.iter())
            .filter(|(s, _)| s[2] > 0)
            .map(|(&[ne, nh, nb], a)| ([ne, nh, nb - 1], a * (scale * (nb as f64).sqrt())))
            .collect();
        let n2: f64 = amplitudes.iter().map(|(_, a)| a.norm_sqr()).sum();
        if !(n2 > 0.0) {
            return Err(SimError::ZeroProbabilityJump(n2));
        }
        for (_, a) in &mut amplitudes {
            *a /= n2.sqrt();
        }
        let tail_flag = tail_flag.or_else(|| self.tail_check(amplitudes.iter().map(|(s, a)| (*s, a.norm_sqr())), time));
        let mut weights = vec![0.0; MAX_REPORTED_OCCUPATION + 1];
        for (s, a) in &amplitudes {
            if let Some(w) = weights.get_mut(s[0]) {
                *w += a.norm_sqr();
            }
        }
        let fidelity = weights[1].sqrt();
        Ok(HeraldOutcome::Click(Box::new(HeraldClick { time, amplitudes, weights, fidelity, tail_flag })))
    }
}

/// Runs the full model from the triple vacuum until the first shutter click
/// (the pump is switched off from then on, so the state at the click is the
/// heralded state). Only the sector reachable from the vacuum is evolved.
pub fn herald_photon(p: &HeraldParams, t_max: f64, dt: f64, key: StreamKey) -> Result<HeraldOutcome> {
    SectorStepper::new(p, t_max, dt)?.run(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldSummary {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
    pub gamma: f64,
    pub attempts: usize,
    pub clicks: usize,
    pub mean_fidelity: f64,
    /// Mean `P(n_e = k | click)`, `k = 0..=4`.
    pub mean_weights: Vec<f64>,
    /// Mean `P(n_e >= 2 | click)`.
    pub multiphoton: f64,
    pub mean_click_time: f64,
    pub tail_flags: usize,
    pub regime: RegimeReport,
}

/// `attempts` independent heralding runs with streams `(seed, 0..attempts)`.
pub fn herald_ensemble(p: &HeraldParams, t_max: f64, dt: f64, seed: u64, attempts: usize) -> Result<(HeraldSummary, Vec<HeraldOutcome>)> {
    let stepper = SectorStepper::new(p, t_max, dt)?;
    let outcomes: Vec<HeraldOutcome> = par_map(attempts, |i| {
        stepper.run(StreamKey::new(seed, i as u64))
            .map_err(|e| SimError::Trajectory { seed, stream: i as u64, source: Box::new(e) })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let clicks: Vec<&HeraldClick> = outcomes
        .iter()
        .filter_map(|o| match o {
            HeraldOutcome::Click(c) => Some(c.as_ref()),
            HeraldOutcome::NoClick => None,
        })
        .collect();
    let n = clicks.len().max(1) as f64;
    let mut mean_weights = vec![0.0; MAX_REPORTED_OCCUPATION + 1];
    let mut multiphoton = 0.0;
    for c in &clicks {
        for (m, w) in mean_weights.iter_mut().zip(&c.weights) {
            *m += w / n;
        }
        multiphoton += (1.0 - c.weights[0] - c.weights[1]).max(0.0) / n;
    }
    let summary = HeraldSummary {
        lambda: p.lambda,
        g: p.g,
        kappa_sc: p.kappa_sc,
        gamma: p.gamma(),
        attempts,
        clicks: clicks.len(),
        mean_fidelity: clicks.iter().map(|c| c.fidelity).sum::<f64>() / n,
        mean_weights,
        multiphoton,
        mean_click_time: clicks.iter().map(|c| c.time).sum::<f64>() / n,
        tail_flags: clicks.iter().filter(|c| c.tail_flag.is_some()).count(),
        regime: p.regime(),
    };
    Ok((summary, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Damping {
    Under,
    Critical,
    Over,
}

impl Damping {
    /// Classification of `c'' + (kappa/2) c' + g^2 c = 0`.
    pub fn classify(g: f64, kappa_sc: f64) -> Self {
        let crit = 4.0 * g;
        if (kappa_sc - crit).abs() <= 1e-12 * crit {
            Damping::Critical
        } else if kappa_sc < crit {
            Damping::Under
        } else {
            Damping::Over
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub kappa_sc: f64,
    pub damping: Damping,
    /// First time the heralding click probability reaches 1/2.
    pub t_half_click: Option<f64>,
    /// First time `<n_e>` reaches 1/2 in the full master equation (if requested).
    pub t_half_mean_photon: Option<f64>,
    /// Largest top-two-level population of the normalized no-jump state up to the crossing.
    pub max_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub horizon: f64,
    pub dt: f64,
    pub truncations: HeraldTruncations,
    /// Also integrate the master equation for the `<n_e>` crossing.
    pub mean_photon: bool,
    /// Grid step of the master-equation run.
    pub master_dt: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { horizon: 10.0, dt: 1e-3, truncations: HeraldTruncations::default(), mean_photon: false, master_dt: 0.01 }
    }
}

fn first_crossing(series: impl IntoIterator<Item = (f64, f64)>, level: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (t, v) in series {
        if v >= level {
            return Some(match prev {
                Some((t0, v0)) if v > v0 => t0 + (t - t0) * (level - v0) / (v - v0),
                _ => t,
            });
        }
        prev = Some((t, v));
    }
    None
}

/// Occupations `(n_e, n_h, n_b)` with `n_e = n_h + n_b` and the full model's
/// `K = H - (i/2) kappa_sc b^dag b` restricted to them. `K` conserves
/// `n_e - n_h - n_b`, so the vacuum's no-jump state never leaves this sector.
fn click_sector(p: &HeraldParams) -> (Vec<[usize; 3]>, DMatrix<C64>) {
    let t = p.truncations;
    let mut basis = Vec::new();
    for nh in 0..t.n_h {
        for nb in 0..t.n_b {
            if nh + nb < t.n_e {
                basis.push([nh + nb, nh, nb]);
            }
        }
    }
    let index = |s: [usize; 3]| basis.iter().position(|b| *b == s);
    let mut k = DMatrix::<C64>::zeros(basis.len(), basis.len());
    for (c, &[ne, nh, nb]) in basis.iter().enumerate() {
        k[(c, c)] = C64::new(0.0, -0.5 * p.kappa_sc * nb as f64);
        // Lambda a_h^dag a_e^dag
        if let Some(r) = index([ne + 1, nh + 1, nb]) {
            let v = p.lambda * (((ne + 1) * (nh + 1)) as f64).sqrt();
            k[(r, c)] += v;
            k[(c, r)] += v;
        }
        // g a_h b^dag
        if nh > 0 {
            if let Some(r) = index([ne, nh - 1, nb + 1]) {
                let v = p.g * ((nh * (nb + 1)) as f64).sqrt();
                k[(r, c)] += v;
                k[(c, r)] += v;
            }
        }
    }
    (basis, k)
}

/// Time at which the click probability `1 - ||psi~(t)||^2` of the full model
/// first reaches 1/2, starting from the vacuum, and the largest tail population
/// of the normalized no-jump state up to then.
pub fn t_half_click(p: &HeraldParams, horizon: f64, dt: f64) -> Result<(Option<f64>, f64)> {
    let steps = crate::engine::steps_for(horizon, dt)?;
    let t = p.truncations;
    let (basis, k) = click_sector(p);
    let step = (k * C64::new(0.0, -dt)).exp();
    let tops = [t.n_e, t.n_h, t.n_b];
    let in_tail: Vec<[bool; 3]> = basis.iter().map(|s| std::array::from_fn(|m| s[m] + 2 >= tops[m])).collect();

    let mut v = DVector::<C64>::zeros(basis.len());
    v[0] = C64::new(1.0, 0.0);
    let mut max_tail = 0.0f64;
    let mut series = vec![(0.0, 0.0)];
    for n in 1..=steps {
        v = &step * &v;
        let n2 = v.norm_squared();
        for m in 0..3 {
            let tail: f64 = v.iter().zip(&in_tail).filter(|(_, f)| f[m]).map(|(a, _)| a.norm_sqr()).sum();
            max_tail = max_tail.max(tail / n2);
        }
        series.push((n as f64 * dt, 1.0 - n2));
        if 1.0 - n2 >= 0.5 {
            break;
        }
    }
    Ok((first_crossing(series, 0.5), max_tail))
}

/// Time at which `<n_e>` of the full master equation first reaches 1/2.
pub fn t_half_mean_photon(p: &HeraldParams, horizon: f64, dt: f64) -> Result<Option<f64>> {
    let model = heralding_model(p, false)?;
    let ne = ModeOperators::on(model.layout(), EMISSION)?.n;
    let grid = TimeGrid::span(horizon, dt)?;
    let rho0 = StateVector::vacuum(model.layout()).to_density();
    let sol = evolve_master_with(&model, &rho0, &grid, &MasterOptions::default())?;
    let n = sol.expectations(&ne)?;
    Ok(first_crossing(sol.times.iter().copied().zip(n), 0.5))
}

/// `t_half` against `kappa_sc` at fixed `Lambda`, `g`. Points run in parallel.
pub fn overdamping_scan(lambda: f64, g: f64, kappas: &[f64], opts: &ScanOptions) -> Result<Vec<ScanRow>> {
    par_map(kappas.len(), |i| {
        let k = kappas[i];
        let p = HeraldParams::with_truncations(lambda, g, k, opts.truncations)?;
        let (click, max_tail) = t_half_click(&p, opts.horizon, opts.dt)?;
        let mean_photon = if opts.mean_photon { t_half_mean_photon(&p, opts.horizon, opts.master_dt)? } else { None };
        Ok(ScanRow { kappa_sc: k, damping: Damping::classify(g, k), t_half_click: click, t_half_mean_photon: mean_photon, max_tail })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .map_err(|e| e.context("overdamping scan"))
}

/// `<n_h>(t)` of the full model with the pump off, starting from `|1_e 1_h 0_b>`.
pub fn heralding_mode_decay(g: f64, kappa_sc: f64, horizon: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = HeraldParams::with_truncations(0.0, g, kappa_sc, HeraldTruncations { n_e: 4, n_h: 4, n_b: 4 })?;
    let model = heralding_model(&p, false)?;
    let rho0 = StateVector::fock(model.layout(), &[1, 1, 0])?.to_density();
    let grid = TimeGrid::span(horizon, dt)?;
    let sol = evolve_master_with(&model, &rho0, &grid, &MasterOptions::default())?;
    let nh = ModeOperators::on(model.layout(), HERALD)?.n;
    let n = sol.expectations(&nh)?;
    Ok((sol.times, n))
}

/// True if the series ever rises by more than `tol` between samples.
pub fn oscillates(series: &[f64], tol: f64) -> bool {
    series.windows(2).any(|w| w[1] > w[0] + tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn click_sector_matches_full_model() {
        let p = HeraldParams::with_truncations(0.7, 3.0, 11.0, HeraldTruncations { n_e: 6, n_h: 4, n_b: 3 }).unwrap();
        let model = heralding_model(&p, false).unwrap();
        let full = model.effective_hamiltonian_at(0.0);
        let (basis, k) = click_sector(&p);
        let layout = model.layout();
        for (r, a) in basis.iter().enumerate() {
            for (c, b) in basis.iter().enumerate() {
                let want = full[(layout.index_of(a), layout.index_of(b))];
                assert!((k[(r, c)] - want).norm() < 1e-12, "{a:?} {b:?}");
            }
        }
        // nothing couples the sector to the rest of the space
        let inside: Vec<usize> = basis.iter().map(|s| layout.index_of(s)).collect();
        for &c in &inside {
            for r in 0..layout.dim() {
                if !inside.contains(&r) {
                    assert!(full[(r, c)].norm() < 1e-15);
                }
            }
        }
    }
    #[test]
    fn sector_attempt_matches_full_trajectory() {
        use crate::engine::{TrajectorySimulator, TrajectorySpec};
        let p = HeraldParams::with_truncations(1.0, 10.0, 100.0, HeraldTruncations { n_e: 6, n_h: 4, n_b: 3 }).unwrap();
        let model = heralding_model(&p, false).unwrap();
        let sim = TrajectorySimulator::new(&model, TrajectorySpec::new(5.0, 1e-3).stop_when(|ev| !ev.is_empty())).unwrap();
        let psi0 = StateVector::vacuum(model.layout());
        for i in 0..6 {
            let key = StreamKey::new(5, i);
            let rec = sim.run(&psi0, key).unwrap();
            let HeraldOutcome::Click(c) = herald_photon(&p, 5.0, 1e-3, key).unwrap() else { panic!("no click") };
            assert_eq!(rec.events[0].time, c.time);
            assert_eq!(rec.tail_flag.as_ref().map(|f| f.mode.clone()), c.tail_flag.as_ref().map(|f| f.mode.clone()));
            let ov = rec.final_state.amplitudes().dotc(c.state(&p).unwrap().amplitudes());
            assert!((ov.norm() - 1.0).abs() < 1e-10);
            let pops = rec.final_state.to_density().reduce_to(&[EMISSION]).unwrap().mode_populations(0);
            for (k, w) in c.weights.iter().enumerate() {
                assert!((pops.get(k).copied().unwrap_or(0.0) - w).abs() < 1e-10);
            }
        }
    }

    use crate::engine::{evolve_master, OpenModel};
    use crate::fock::ModeOperator;

    #[test]
    fn reduced_gain_rate() {
        let p = HeraldParams::new(1.0, 10.0, 100.0).unwrap();
        assert!((p.gamma() - 1.0).abs() < 1e-15);
        // Omega / Lambda = 4 here
        assert!(!p.regime().satisfied);
        assert!(HeraldParams::new(1.0, 30.0, 300.0).unwrap().regime().satisfied);
        let m = heralding_model(&p, true).unwrap();
        assert_eq!(m.channels().len(), 1);
    }

    #[test]
    fn beam_splitter_conserves_h_plus_b() {
        let p = HeraldParams::with_truncations(0.0, 3.0, 10.0, HeraldTruncations { n_e: 2, n_h: 3, n_b: 3 }).unwrap();
        let m = heralding_model(&p, false).unwrap();
        let h = ModeOperators::on(m.layout(), HERALD).unwrap().n;
        let b = ModeOperators::on(m.layout(), SHUTTER).unwrap().n;
        let total: ModeOperator = h.plus(&b).unwrap();
        let ham = m.hamiltonian_at(0.0);
        let comm = &ham * total.matrix() - total.matrix() * &ham;
        assert!(comm.norm() < 1e-12);
    }

    #[test]
    fn no_pump_no_click() {
        let p = HeraldParams::new(0.0, 10.0, 100.0).unwrap();
        for s in 0..3 {
            assert_eq!(herald_photon(&p, 1.0, 1e-3, StreamKey::new(s, 0)).unwrap(), HeraldOutcome::NoClick);
        }
    }

    #[test]
    fn reduced_gain_from_vacuum() {
        let p = HeraldParams::with_truncations(1.0, 10.0, 100.0, HeraldTruncations { n_e: 20, n_h: 2, n_b: 2 }).unwrap();
        let m: OpenModel = heralding_model(&p, true).unwrap();
        let n = ModeOperators::on(m.layout(), EMISSION).unwrap().n;
        let sol = evolve_master(&m, &StateVector::vacuum(m.layout()).to_density(), &TimeGrid::span(0.5, 0.05).unwrap()).unwrap();
        for (t, v) in sol.times.iter().zip(sol.expectations(&n).unwrap()) {
            assert!((v - (t.exp() - 1.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn damping_classes() {
        assert_eq!(Damping::classify(10.0, 20.0), Damping::Under);
        assert_eq!(Damping::classify(10.0, 40.0), Damping::Critical);
        assert_eq!(Damping::classify(10.0, 80.0), Damping::Over);
    }

    #[test]
    fn crossing_interpolates() {
        let s = vec![(0.0, 0.0), (1.0, 0.4), (2.0, 0.8)];
        assert!((first_crossing(s, 0.5).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(first_crossing(vec![(0.0, 0.1)], 0.5), None);
    }
}
