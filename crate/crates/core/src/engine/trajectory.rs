use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::master::steps_for;
use super::model::{Generator, GeneratorCache};
use super::OpenModel;
use crate::error::{Result, SimError};
use crate::fock::{StateVector, C64, TAIL_GUARD};

/// Largest allowed per-step jump probability of any single channel.
pub const MAX_STEP_PROBABILITY: f64 = 0.05;

/// Identifies an independent random stream: the master seed plus a trajectory index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub state: StateVector,
}

/// First time the tail guard was exceeded along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFlag {
    pub time: f64,
    pub mode: String,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub key: StreamKey,
    pub events: Vec<JumpEvent>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: StateVector,
    pub final_time: f64,
    /// The stop rule ended the run before the horizon.
    pub stopped: bool,
    /// Set by postselection.
    pub survived: Option<bool>,
    pub tail_flag: Option<TailFlag>,
}

impl TrajectoryRecord {
    pub fn to_json(&self) -> serde_json::Value {
        let amps = |s: &StateVector| s.amplitudes().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>();
        json!({
            "seed": self.key.seed,
            "stream": self.key.stream,
            "events": self.events.iter().map(|e| json!({"t": e.time, "channel": e.label})).collect::<Vec<_>>(),
            "snapshots": self.snapshots.iter().map(|s| json!({"t": s.time, "amplitudes": amps(&s.state)})).collect::<Vec<_>>(),
            "final_time": self.final_time,
            "stopped": self.stopped,
            "survived": self.survived,
            "tail_flag": self.tail_flag,
        })
    }
}

/// Decides after each jump whether the trajectory should end.
pub type StopRule = Arc<dyn Fn(&[JumpEvent]) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct TrajectorySpec {
    pub horizon: f64,
    pub dt: f64,
    /// Store a snapshot every this many steps (and at `t = 0`).
    pub snapshot_every: Option<usize>,
    pub stop: Option<StopRule>,
    pub tail_guard: f64,
}

impl TrajectorySpec {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self { horizon, dt, snapshot_every: None, stop: None, tail_guard: TAIL_GUARD }
    }

    pub fn snapshots_every(mut self, steps: usize) -> Self {
        self.snapshot_every = Some(steps.max(1));
        self
    }

    pub fn stop_when(mut self, rule: impl Fn(&[JumpEvent]) -> bool + Send + Sync + 'static) -> Self {
        self.stop = Some(Arc::new(rule));
        self
    }
}

impl std::fmt::Debug for TrajectorySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectorySpec")
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("snapshot_every", &self.snapshot_every)
            .field("stop", &self.stop.is_some())
            .finish()
    }
}

enum Drift {
    /// `exp(-i K dt)` for a time-independent model.
    Propagator(DMatrix<C64>),
    Rk4,
}

/// A model prepared for repeated trajectory runs at a fixed `dt`.
pub struct TrajectorySimulator<'a> {
    model: &'a OpenModel,
    spec: TrajectorySpec,
    steps: usize,
    drift: Drift,
    static_gen: Option<Generator>,
    labels: Vec<String>,
    tails: Vec<(String, Vec<usize>)>,
}

impl<'a> TrajectorySimulator<'a> {
    pub fn new(model: &'a OpenModel, spec: TrajectorySpec) -> Result<Self> {
        let steps = steps_for(spec.horizon, spec.dt)?;
        let (drift, static_gen) = if model.is_static() {
            let g = model.generator_at(0.0);
            let u = (&g.k_dense * C64::new(0.0, -spec.dt)).exp();
            (Drift::Propagator(u), Some(g))
        } else {
            (Drift::Rk4, None)
        };
        let layout = model.layout();
        let tails = layout
            .modes()
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let idx = (0..layout.dim()).filter(|&i| layout.occupation(i, k) + 2 >= m.dim).collect();
                (m.label.clone(), idx)
            })
            .collect();
        Ok(Self {
            model,
            labels: model.channels().iter().map(|c| c.label.clone()).collect(),
            spec,
            steps,
            drift,
            static_gen,
            tails,
        })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn run(&self, psi0: &StateVector, key: StreamKey) -> Result<TrajectoryRecord> {
        self.model.layout().ensure_same(psi0.layout(), "trajectory initial state")?;
        if (psi0.norm_squared() - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidArgument("trajectory initial state is not normalized".into()));
        }
        let dt = self.spec.dt;
        let mut rng = key.rng();
        let mut cache = GeneratorCache::new(self.model);
        let mut psi = psi0.amplitudes().clone();
        let d = psi.len();
        let mut work = DVector::<C64>::zeros(d);
        let mut rk = [(); 4].map(|_| DVector::<C64>::zeros(d));
        let mut events = Vec::new();
        let mut snapshots = Vec::new();
        let mut tail_flag = None;
        let mut probs = vec![0.0; self.labels.len()];
        let snap = |psi: &DVector<C64>, t: f64, out: &mut Vec<Snapshot>| -> Result<()> {
            out.push(Snapshot { time: t, state: StateVector::new(self.model.layout().clone(), psi.clone())? });
            Ok(())
        };
        if self.spec.snapshot_every.is_some() {
            snap(&psi, 0.0, &mut snapshots)?;
        }
        let mut stopped = false;
        let mut t_end = self.steps as f64 * dt;
        for step in 0..self.steps {
            let t = step as f64 * dt;
            let gen = match &self.static_gen {
                Some(g) => g,
                None => cache.at(t),
            };
            let mut total = 0.0;
            for (j, l) in gen.jumps.iter().enumerate() {
                l.mul_vec(&psi, &mut work);
                let p = work.norm_squared() * dt;
                if p >= MAX_STEP_PROBABILITY {
                    return Err(SimError::StepTooCoarse { prob: p, limit: MAX_STEP_PROBABILITY });
                }
                probs[j] = p;
                total += p;
            }
            let u: f64 = rng.random();
            let t_next = (step + 1) as f64 * dt;
            if u < total {
                let mut acc = 0.0;
                let mut chosen = probs.len() - 1;
                for (j, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = j;
                        break;
                    }
                }
                if probs[chosen] <= 0.0 {
                    return Err(SimError::ZeroProbabilityJump(probs[chosen]));
                }
                gen.jumps[chosen].mul_vec(&psi, &mut work);
                std::mem::swap(&mut psi, &mut work);
                events.push(JumpEvent { time: t_next, channel: chosen, label: self.labels[chosen].clone() });
            } else {
                match &self.drift {
                    Drift::Propagator(u) => {
                        work.gemv(C64::new(1.0, 0.0), u, &psi, C64::new(0.0, 0.0));
                        std::mem::swap(&mut psi, &mut work);
                    }
                    Drift::Rk4 => rk4_vec(gen, &mut psi, dt, &mut rk, &mut work),
                }
            }
            let n2 = psi.norm_squared();
            if !(n2 > 1e-28) || !n2.is_finite() {
                return Err(SimError::NumericalDegeneracy(format!("state norm collapsed to {n2:.3e} at t = {t_next}")));
            }
            psi.unscale_mut(n2.sqrt());
            if tail_flag.is_none() {
                tail_flag = self.tail_check(&psi, t_next);
            }
            if let Some(every) = self.spec.snapshot_every {
                if (step + 1) % every == 0 {
                    snap(&psi, t_next, &mut snapshots)?;
                }
            }
            if u < total {
                if let Some(rule) = &self.spec.stop {
                    if rule(&events) {
                        stopped = true;
                        t_end = t_next;
                        break;
                    }
                }
            }
        }
        Ok(TrajectoryRecord {
            key,
            events,
            snapshots,
            final_state: StateVector::new(self.model.layout().clone(), psi)?,
            final_time: t_end,
            stopped,
            survived: None,
            tail_flag,
        })
    }

    fn tail_check(&self, psi: &DVector<C64>, t: f64) -> Option<TailFlag> {
        for (mode, idx) in &self.tails {
            let tail: f64 = idx.iter().map(|&i| psi[i].norm_sqr()).sum();
            if !(tail < self.spec.tail_guard) {
                return Some(TailFlag { time: t, mode: mode.clone(), tail });
            }
        }
        None
    }
}

/// One RK4 step of `d psi/dt = -i K psi` (unnormalized).
fn rk4_vec(g: &Generator, psi: &mut DVector<C64>, h: f64, k: &mut [DVector<C64>; 4], tmp: &mut DVector<C64>) {
    let mi = C64::new(0.0, -1.0);
    let c = |x: f64| C64::new(x, 0.0);
    let [k1, k2, k3, k4] = k;
    g.k.mul_vec(psi, k1);
    *k1 *= mi;
    tmp.copy_from(psi);
    tmp.axpy(c(h / 2.0), k1, c(1.0));
    g.k.mul_vec(tmp, k2);
    *k2 *= mi;
    tmp.copy_from(psi);
    tmp.axpy(c(h / 2.0), k2, c(1.0));
    g.k.mul_vec(tmp, k3);
    *k3 *= mi;
    tmp.copy_from(psi);
    tmp.axpy(c(h), k3, c(1.0));
    g.k.mul_vec(tmp, k4);
    *k4 *= mi;
    psi.axpy(c(h / 6.0), k1, c(1.0));
    psi.axpy(c(h / 3.0), k2, c(1.0));
    psi.axpy(c(h / 3.0), k3, c(1.0));
    psi.axpy(c(h / 6.0), k4, c(1.0));
}

pub fn simulate_trajectory(
    model: &OpenModel,
    psi0: &StateVector,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    TrajectorySimulator::new(model, TrajectorySpec::new(horizon, dt))?.run(psi0, StreamKey::new(seed, 0))
}

/// Unnormalized no-jump state `psi~(t)` at each grid time, propagated exactly
/// by `exp(-i K dt)` per interval (one exponential per distinct schedule sample).
pub fn no_jump_evolution(model: &OpenModel, psi0: &StateVector, horizon: f64, dt: f64) -> Result<Vec<(f64, StateVector)>> {
    model.layout().ensure_same(psi0.layout(), "no-jump evolution")?;
    let steps = steps_for(horizon, dt)?;
    let mut psi = psi0.amplitudes().clone();
    let mut work = DVector::zeros(psi.len());
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, psi0.clone()));
    let mut key: Option<Vec<usize>> = None;
    let mut u = DMatrix::<C64>::zeros(0, 0);
    for step in 0..steps {
        let t = step as f64 * dt;
        let k = model.schedule_key(t);
        if key.as_ref() != Some(&k) {
            u = (&model.effective_hamiltonian_at(t) * C64::new(0.0, -dt)).exp();
            key = Some(k);
        }
        work.gemv(C64::new(1.0, 0.0), &u, &psi, C64::new(0.0, 0.0));
        std::mem::swap(&mut psi, &mut work);
        out.push(((step + 1) as f64 * dt, StateVector::new(model.layout().clone(), psi.clone())?));
    }
    Ok(out)
}

/// Probability of no detection up to each grid time, `||psi~(t)||^2`. Returns `(t, p)` pairs.
pub fn no_jump_probability(model: &OpenModel, psi0: &StateVector, horizon: f64, dt: f64) -> Result<Vec<(f64, f64)>> {
    Ok(no_jump_evolution(model, psi0, horizon, dt)?.into_iter().map(|(t, s)| (t, s.norm_squared())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::mode_operators;

    fn decay(dim: usize, kappa: f64) -> (OpenModel, crate::fock::ModeOperators) {
        let ops = mode_operators(dim).unwrap();
        let m = OpenModel::new(ops.a.layout().clone()).with_channel("L", ops.a.scaled_real(kappa.sqrt())).unwrap();
        (m, ops)
    }

    #[test]
    fn vacuum_never_jumps() {
        let (m, ops) = decay(4, 1.0);
        let vac = StateVector::vacuum(ops.a.layout());
        let rec = simulate_trajectory(&m, &vac, 2.0, 1e-3, 7).unwrap();
        assert!(rec.events.is_empty());
        assert_eq!(rec.final_state, vac);
    }

    #[test]
    fn coarse_step_rejected() {
        let (m, ops) = decay(4, 100.0);
        let one = StateVector::fock(ops.a.layout(), &[1]).unwrap();
        assert!(matches!(simulate_trajectory(&m, &one, 1.0, 1e-3, 1), Err(SimError::StepTooCoarse { .. })));
    }

    #[test]
    fn deterministic_per_key() {
        let (m, ops) = decay(4, 1.0);
        let one = StateVector::fock(ops.a.layout(), &[3]).unwrap();
        let sim = TrajectorySimulator::new(&m, TrajectorySpec::new(3.0, 1e-3).snapshots_every(100)).unwrap();
        let a = sim.run(&one, StreamKey::new(5, 2)).unwrap();
        let b = sim.run(&one, StreamKey::new(5, 2)).unwrap();
        let c = sim.run(&one, StreamKey::new(5, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
        assert_ne!(a.events, c.events);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        for s in &a.snapshots {
            assert!((s.state.norm_squared() - 1.0).abs() < 1e-8);
        }
        assert_eq!(a.snapshots.len(), 31);
    }

    #[test]
    fn stop_rule_ends_run() {
        let (m, ops) = decay(4, 1.0);
        let one = StateVector::fock(ops.a.layout(), &[2]).unwrap();
        let spec = TrajectorySpec::new(50.0, 1e-3).stop_when(|ev| !ev.is_empty());
        let rec = TrajectorySimulator::new(&m, spec).unwrap().run(&one, StreamKey::new(1, 0)).unwrap();
        assert!(rec.stopped);
        assert_eq!(rec.events.len(), 1);
        assert_eq!(rec.final_time, rec.events[0].time);
    }

    #[test]
    fn no_jump_probability_of_single_photon() {
        let (m, ops) = decay(3, 2.0);
        let one = StateVector::fock(ops.a.layout(), &[1]).unwrap();
        for (t, p) in no_jump_probability(&m, &one, 1.0, 0.01).unwrap() {
            assert!((p - (-2.0 * t).exp()).abs() < 1e-12);
        }
    }
}
