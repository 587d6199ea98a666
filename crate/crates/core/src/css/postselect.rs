use serde::{Deserialize, Serialize};

use super::channels::{css_model, ChannelSet, CssParams, L_MINUS, L_PLUS};
use crate::engine::{par_map, stream_keys, TrajectorySimulator, TrajectorySpec};
use crate::error::{Result, SimError};
use crate::fock::{cat_state, fidelity, Parity, StateVector, C64};

/// Largest allowed time between consecutive `L_+` detections, in units of `1/gamma`.
pub const DEFAULT_MAX_GAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Gate {
    None,
    MaxGap { max_gap: f64 },
}

impl Gate {
    pub fn admits(&self, gap: f64) -> bool {
        match *self {
            Gate::None => true,
            Gate::MaxGap { max_gap } => gap <= max_gap,
        }
    }
}

/// Times in units of `1/gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectConfig {
    pub n_target: u32,
    pub trajectories: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

impl PostselectConfig {
    pub fn new(n_target: u32, trajectories: usize, seed: u64) -> Self {
        Self { n_target, trajectories, horizon: 5.0, dt: 1e-3, seed }
    }

    /// Truncation used when none is given: `2n + 10` levels.
    pub fn default_dim(&self) -> usize {
        2 * self.n_target as usize + 10
    }
}

/// A trajectory whose first `n_target` detections all came from `L_+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survivor {
    pub stream: u64,
    /// Detection times in units of `1/gamma`.
    pub jump_times: Vec<f64>,
    /// Largest time between consecutive detections (0 for a single one).
    pub max_gap: f64,
    /// `|<cat|psi>|` against the cat state with `alpha = sqrt(n/2)`.
    pub fidelity: f64,
    #[serde(skip)]
    pub state: Option<StateVector>,
    pub tail_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostselectStats {
    pub n_target: u32,
    pub trajectories: usize,
    pub survivors: usize,
    pub fraction: f64,
    /// Binomial standard error of `fraction`.
    pub fraction_std_err: f64,
    pub mean_fidelity: Option<f64>,
    pub fidelity_variance: Option<f64>,
    pub gate: Gate,
    /// Fidelity of `x^n|0>` with the same cat, i.e. instantaneous jumps.
    pub closed_form_fidelity: f64,
    pub tail_flags: usize,
}

/// Survivors of one trajectory pool, before gating.
#[derive(Debug, Clone)]
pub struct PostselectRun {
    pub config: PostselectConfig,
    pub survivors: Vec<Survivor>,
    closed_form: f64,
}

impl PostselectRun {
    pub fn admitted(&self, gate: Gate) -> impl Iterator<Item = &Survivor> {
        self.survivors.iter().filter(move |s| gate.admits(s.max_gap))
    }

    pub fn stats(&self, gate: Gate) -> PostselectStats {
        let fids: Vec<f64> = self.admitted(gate).map(|s| s.fidelity).collect();
        let n = self.config.trajectories;
        let k = fids.len();
        let fraction = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let (mean, var) = if k == 0 {
            (None, None)
        } else {
            let m = fids.iter().sum::<f64>() / k as f64;
            let v = fids.iter().map(|f| (f - m).powi(2)).sum::<f64>() / k as f64;
            (Some(m), Some(v))
        };
        PostselectStats {
            n_target: self.config.n_target,
            trajectories: n,
            survivors: k,
            fraction,
            fraction_std_err: (fraction * (1.0 - fraction) / n.max(1) as f64).sqrt(),
            mean_fidelity: mean,
            fidelity_variance: var,
            gate,
            closed_form_fidelity: self.closed_form,
            tail_flags: self.admitted(gate).filter(|s| s.tail_flagged).count(),
        }
    }

    /// `stream,fidelity,max_gap[1/gamma],admitted` per survivor.
    pub fn write_csv(&self, gate: Gate, mut w: impl std::io::Write) -> Result<()> {
        let io = |e: std::io::Error| SimError::Io(e.to_string());
        writeln!(w, "stream,fidelity,max_gap[1/gamma],admitted").map_err(io)?;
        for s in &self.survivors {
            writeln!(w, "{},{:.12},{:.6},{}", s.stream, s.fidelity, s.max_gap, gate.admits(s.max_gap)).map_err(io)?;
        }
        Ok(())
    }
}

/// Runs `config.trajectories` attempts from the vacuum under `{L_+, L_-}`.
/// An attempt ends at its first `L_-` detection (a failed attempt; the
/// cavity is emptied and a fresh attempt starts) or its `n_target`-th
/// detection. Survivors are compared with the cat state `alpha = sqrt(n/2)`
/// of parity `n mod 2`.
pub fn postselect_run(p: &CssParams, config: &PostselectConfig) -> Result<PostselectRun> {
    let n = config.n_target;
    if n == 0 {
        return Err(SimError::InvalidArgument("n_target must be at least 1".into()));
    }
    let needed = 2 * n as usize + 4;
    if p.dim < needed {
        return Err(SimError::TruncationUnsafe { mode: crate::fock::SINGLE_MODE.into(), tail: f64::NAN, at: None }
            .context(format!("{n} detections need at least {needed} Fock levels, got {}", p.dim)));
    }
    let gamma = p.gamma();
    let model = css_model(p, ChannelSet::Quadrature)?;
    let target = cat_state(C64::new((n as f64 / 2.0).sqrt(), 0.0), Parity::of(n), p.dim)?;
    let closed = crate::fock::css_fidelity_closed(n);
    let spec = TrajectorySpec::new(config.horizon / gamma, config.dt / gamma).stop_when(move |ev| {
        ev.len() >= n as usize || ev.last().is_some_and(|e| e.label == L_MINUS)
    });
    let sim = TrajectorySimulator::new(&model, spec)?;
    let vacuum = StateVector::vacuum(model.layout());
    let keys = stream_keys(config.seed, config.trajectories);
    let outcomes = par_map(keys.len(), |i| -> Result<Option<Survivor>> {
        let key = keys[i];
        let rec = sim
            .run(&vacuum, key)
            .map_err(|e| SimError::Trajectory { seed: key.seed, stream: key.stream, source: Box::new(e) })?;
        let ok = rec.events.len() == n as usize && rec.events.iter().all(|e| e.label == L_PLUS);
        if !ok {
            return Ok(None);
        }
        let times: Vec<f64> = rec.events.iter().map(|e| e.time * gamma).collect();
        let max_gap = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Some(Survivor {
            stream: key.stream,
            fidelity: fidelity(&rec.final_state, &target)?,
            jump_times: times,
            max_gap,
            state: Some(rec.final_state),
            tail_flagged: rec.tail_flag.is_some(),
        }))
    });
    let mut survivors = Vec::new();
    for o in outcomes {
        if let Some(s) = o? {
            survivors.push(s);
        }
    }
    Ok(PostselectRun { config: *config, survivors, closed_form: closed })
}

/// Statistics and admitted survivors for one gate setting.
pub fn postselect_generate(p: &CssParams, config: &PostselectConfig, gate: Gate) -> Result<(PostselectStats, Vec<Survivor>)> {
    let run = postselect_run(p, config)?;
    let stats = run.stats(gate);
    let kept = run.admitted(gate).cloned().collect();
    Ok((stats, kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_detection_is_a_coin_flip() {
        let p = CssParams::unit_gamma(12).unwrap();
        let cfg = PostselectConfig { n_target: 1, trajectories: 1000, horizon: 5.0, dt: 1e-3, seed: 3 };
        let (s, kept) = postselect_generate(&p, &cfg, Gate::None).unwrap();
        let sigma = (0.25f64 / 1000.0).sqrt();
        assert!((s.fraction - 0.5).abs() < 3.0 * sigma, "{}", s.fraction);
        assert_eq!(kept.len(), s.survivors);
        // the vacuum does not drift, so one jump lands exactly on |1>
        let closed = crate::fock::css_fidelity_closed(1);
        assert!(kept.iter().all(|k| (k.fidelity - closed).abs() < 1e-9));
    }

    #[test]
    fn gating_filters_the_same_pool() {
        let p = CssParams::unit_gamma(16).unwrap();
        let cfg = PostselectConfig { n_target: 3, trajectories: 300, horizon: 5.0, dt: 1e-3, seed: 9 };
        let run = postselect_run(&p, &cfg).unwrap();
        let open = run.stats(Gate::None);
        let gated = run.stats(Gate::MaxGap { max_gap: DEFAULT_MAX_GAP });
        assert!(gated.survivors <= open.survivors);
        assert!(open.survivors <= open.trajectories);
        assert!((open.fraction - open.survivors as f64 / 300.0).abs() < 1e-15);
        assert!(run.survivors.iter().all(|s| s.jump_times.len() == 3));
        assert!(run.survivors.iter().all(|s| s.fidelity <= 1.0 + 1e-12));
    }

    #[test]
    fn zero_survivors_leave_fidelity_empty() {
        let p = CssParams::unit_gamma(16).unwrap();
        let cfg = PostselectConfig { n_target: 4, trajectories: 5, horizon: 0.01, dt: 1e-3, seed: 1 };
        let (s, _) = postselect_generate(&p, &cfg, Gate::None).unwrap();
        assert_eq!(s.survivors, 0);
        assert!(s.mean_fidelity.is_none() && s.fidelity_variance.is_none());
    }

    #[test]
    fn small_truncation_rejected() {
        let p = CssParams::unit_gamma(10).unwrap();
        assert!(postselect_run(&p, &PostselectConfig::new(5, 10, 0)).is_err());
    }
}
