use serde::{Deserialize, Serialize};

use super::channels::{css_model, ChannelSet, CssParams, L_MINUS};
use crate::engine::{ensemble_run, stream_keys, Channel, OpenModel, TrajectorySimulator, TrajectorySpec};
use crate::error::{Result, SimError};
use crate::fock::{ModeOperators, StateVector};

/// Hermiticity tolerance for a channel to be frozen.
pub const NKF_HERMITIAN_TOL: f64 = 1e-10;

/// A model with one Hermitian channel cancelled by ideal no-knowledge
/// feedback, plus what is needed to restore it.
///
/// The homodyne record `j(t)` and the feedback drive `beta(t)` that achieve
/// this are not simulated: with zero delay and unit efficiency their net
/// effect on the unconditional dynamics is to remove the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenChannel {
    pub model: OpenModel,
    pub channel: Channel,
    pub position: usize,
}

impl FrozenChannel {
    pub fn unfreeze(&self) -> Result<OpenModel> {
        self.model.with_channel_at(self.channel.clone(), self.position)
    }
}

pub fn nkf_freeze(model: &OpenModel, label: &str) -> Result<FrozenChannel> {
    let ch = model.channel(label)?;
    if ch.op.hermiticity_defect() > NKF_HERMITIAN_TOL {
        return Err(SimError::NkfInapplicable(label.into()));
    }
    let (model, channel, position) = model.without_channel(label)?;
    Ok(FrozenChannel { model, channel, position })
}

/// The model with channel `label` frozen.
pub fn nkf_transform(model: &OpenModel, label: &str) -> Result<OpenModel> {
    Ok(nkf_freeze(model, label)?.model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Squeezing {
    pub var_x: f64,
    pub var_p: f64,
    /// `min(var_x, var_p) / (1/2)`; below 1 means squeezed.
    pub min_ratio: f64,
}

/// Quadrature variances of a normalized single-mode state.
pub fn squeezing_metric(state: &StateVector) -> Result<Squeezing> {
    let layout = state.layout();
    if layout.num_modes() != 1 {
        return Err(SimError::Unsupported(format!("squeezing of multimode layout {}", layout.describe())));
    }
    if (state.norm_squared() - 1.0).abs() > 1e-9 {
        return Err(SimError::InvalidArgument("squeezing metric needs a normalized state".into()));
    }
    let label = layout.modes()[0].label.clone();
    let ops = ModeOperators::on(layout, &label)?;
    let var = |op: &crate::fock::ModeOperator| -> Result<f64> {
        let m = state.expectation(op)?.re;
        let m2 = state.apply(op)?.norm_squared();
        Ok(m2 - m * m)
    };
    let (vx, vp) = (var(&ops.x)?, var(&ops.p)?);
    Ok(Squeezing { var_x: vx, var_p: vp, min_ratio: vx.min(vp) / 0.5 })
}

/// Times in units of `1/gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NkfConfig {
    pub trajectories: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Steps between variance evaluations.
    pub sample_every: usize,
}

impl NkfConfig {
    pub fn new(trajectories: usize, seed: u64) -> Self {
        Self { trajectories, horizon: 3.0, dt: 1e-3, seed, sample_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NkfSummary {
    pub trajectories: usize,
    /// Trajectories whose smallest quadrature variance fell below 1/2.
    pub squeezed: usize,
    pub fraction: f64,
    /// Per trajectory, the minimum over sampled times of `min_ratio`.
    pub min_ratios: Vec<f64>,
    pub mean_jumps: f64,
    pub tail_flags: usize,
}

/// Vacuum trajectories under `{L_+, L_-}` with `L_-` frozen.
pub fn nkf_squeezing_run(p: &CssParams, config: &NkfConfig) -> Result<NkfSummary> {
    let gamma = p.gamma();
    let model = nkf_transform(&css_model(p, ChannelSet::Quadrature)?, L_MINUS)?;
    let spec = TrajectorySpec::new(config.horizon / gamma, config.dt / gamma).snapshots_every(config.sample_every.max(1));
    let sim = TrajectorySimulator::new(&model, spec)?;
    let records = ensemble_run(&sim, &StateVector::vacuum(model.layout()), &stream_keys(config.seed, config.trajectories))?;
    let mut min_ratios = Vec::with_capacity(records.len());
    for r in &records {
        let mut m = f64::INFINITY;
        for s in &r.snapshots {
            m = m.min(squeezing_metric(&s.state)?.min_ratio);
        }
        min_ratios.push(m);
    }
    let squeezed = min_ratios.iter().filter(|&&m| m < 1.0).count();
    let n = records.len().max(1) as f64;
    Ok(NkfSummary {
        trajectories: records.len(),
        squeezed,
        fraction: squeezed as f64 / n,
        mean_jumps: records.iter().map(|r| r.events.len() as f64).sum::<f64>() / n,
        tail_flags: records.iter().filter(|r| r.tail_flag.is_some()).count(),
        min_ratios,
    })
}
