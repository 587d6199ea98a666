use nalgebra::DMatrix;

use crate::error::{Result, SimError};
use crate::fock::{Layout, ModeOperator, C64};
use crate::schedule::Schedule;
use crate::sparse::Csr;

/// Real prefactor of a Hamiltonian term or jump operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    Scheduled(Schedule),
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Scheduled(s) => s.real_at(t),
        }
    }

    fn key(&self, t: f64) -> Option<usize> {
        match self {
            Coefficient::Constant(_) => None,
            Coefficient::Scheduled(s) => Some(s.index_at(t)),
        }
    }
}

/// `coeff(t) * op`, with `op` Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub op: ModeOperator,
    pub coeff: Coefficient,
}

/// Decoherence channel `L(t) = coeff(t) * op`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    pub op: ModeOperator,
    pub coeff: Coefficient,
}

impl Channel {
    pub fn operator_at(&self, t: f64) -> DMatrix<C64> {
        self.op.matrix() * C64::new(self.coeff.at(t), 0.0)
    }
}

/// A Hamiltonian (sum of possibly scheduled terms) plus decoherence channels.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenModel {
    layout: Layout,
    hamiltonian: Vec<HamiltonianTerm>,
    channels: Vec<Channel>,
}

impl OpenModel {
    pub fn new(layout: Layout) -> Self {
        Self { layout, hamiltonian: Vec::new(), channels: Vec::new() }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn hamiltonian_terms(&self) -> &[HamiltonianTerm] {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn with_hamiltonian(self, op: ModeOperator) -> Result<Self> {
        self.with_term(op, Coefficient::Constant(1.0))
    }

    pub fn with_term(mut self, op: ModeOperator, coeff: Coefficient) -> Result<Self> {
        self.layout.ensure_same(op.layout(), "Hamiltonian term")?;
        let dev = op.hermiticity_defect();
        if dev > 1e-10 {
            return Err(SimError::InvalidArgument(format!("Hamiltonian term not Hermitian (defect {dev:.3e})")));
        }
        self.hamiltonian.push(HamiltonianTerm { op, coeff });
        Ok(self)
    }

    pub fn with_channel(self, label: impl Into<String>, op: ModeOperator) -> Result<Self> {
        self.with_scheduled_channel(label, op, Coefficient::Constant(1.0))
    }

    pub fn with_scheduled_channel(mut self, label: impl Into<String>, op: ModeOperator, coeff: Coefficient) -> Result<Self> {
        let label = label.into();
        self.layout.ensure_same(op.layout(), &format!("channel `{label}`"))?;
        if self.channels.iter().any(|c| c.label == label) {
            return Err(SimError::InvalidArgument(format!("duplicate channel label `{label}`")));
        }
        self.channels.push(Channel { label, op, coeff });
        Ok(self)
    }

    pub fn channel(&self, label: &str) -> Result<&Channel> {
        self.channels.iter().find(|c| c.label == label).ok_or_else(|| SimError::UnknownChannel(label.into()))
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.channels.iter().position(|c| c.label == label).ok_or_else(|| SimError::UnknownChannel(label.into()))
    }

    /// Removes a channel, returning the model, the channel and its former position.
    pub fn without_channel(&self, label: &str) -> Result<(OpenModel, Channel, usize)> {
        let idx = self.channel_index(label)?;
        let mut m = self.clone();
        let ch = m.channels.remove(idx);
        Ok((m, ch, idx))
    }

    /// Inserts a channel at `position` (clamped to the end).
    pub fn with_channel_at(&self, channel: Channel, position: usize) -> Result<OpenModel> {
        self.layout.ensure_same(channel.op.layout(), "channel")?;
        if self.channels.iter().any(|c| c.label == channel.label) {
            return Err(SimError::InvalidArgument(format!("duplicate channel label `{}`", channel.label)));
        }
        let mut m = self.clone();
        let pos = position.min(m.channels.len());
        m.channels.insert(pos, channel);
        Ok(m)
    }

    pub fn is_static(&self) -> bool {
        self.hamiltonian.iter().all(|h| matches!(h.coeff, Coefficient::Constant(_)))
            && self.channels.iter().all(|c| matches!(c.coeff, Coefficient::Constant(_)))
    }

    pub fn hamiltonian_at(&self, t: f64) -> DMatrix<C64> {
        let d = self.layout.dim();
        let mut h = DMatrix::zeros(d, d);
        for term in &self.hamiltonian {
            let c = term.coeff.at(t);
            if c != 0.0 {
                h += term.op.matrix() * C64::new(c, 0.0);
            }
        }
        h
    }

    pub fn channel_ops_at(&self, t: f64) -> Vec<DMatrix<C64>> {
        self.channels.iter().map(|c| c.operator_at(t)).collect()
    }

    /// Sample indices of all scheduled coefficients at `t`; equal keys mean equal generators.
    pub(crate) fn schedule_key(&self, t: f64) -> Vec<usize> {
        self.hamiltonian
            .iter()
            .map(|h| &h.coeff)
            .chain(self.channels.iter().map(|c| &c.coeff))
            .filter_map(|c| c.key(t))
            .collect()
    }

    /// Non-Hermitian effective Hamiltonian `H - (i/2) sum L^dag L` at `t`.
    pub fn effective_hamiltonian_at(&self, t: f64) -> DMatrix<C64> {
        let mut k = self.hamiltonian_at(t);
        for l in self.channel_ops_at(t) {
            Csr::from_dense(&l.adjoint()).mul_dense_acc(&l, C64::new(0.0, -0.5), &mut k);
        }
        k
    }

    pub(crate) fn generator_at(&self, t: f64) -> Generator {
        let ls = self.channel_ops_at(t);
        let k = self.effective_hamiltonian_at(t);
        Generator {
            k_adj: Csr::from_dense(&k.adjoint()),
            k: Csr::from_dense(&k),
            jumps_adj: ls.iter().map(|l| Csr::from_dense(&l.adjoint())).collect(),
            jumps: ls.iter().map(Csr::from_dense).collect(),
            k_dense: k,
        }
    }
}

/// The model frozen at one instant, in sparse form.
#[derive(Debug, Clone)]
pub(crate) struct Generator {
    pub k: Csr,
    pub k_adj: Csr,
    pub jumps: Vec<Csr>,
    pub jumps_adj: Vec<Csr>,
    pub k_dense: DMatrix<C64>,
}

impl Generator {
    /// `out = -i K rho + i rho K^dag + sum L rho L^dag`; `scratch` is overwritten.
    pub fn lindblad_into(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, scratch: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        let i = C64::new(0.0, 1.0);
        self.k.mul_dense_acc(rho, -i, out);
        self.k_adj.dense_mul_acc(rho, i, out);
        let one = C64::new(1.0, 0.0);
        for (l, ld) in self.jumps.iter().zip(&self.jumps_adj) {
            scratch.fill(C64::new(0.0, 0.0));
            l.mul_dense_acc(rho, one, scratch);
            ld.dense_mul_acc(scratch, one, out);
        }
    }
}

/// Caches the generator across calls while the schedule key is unchanged.
pub(crate) struct GeneratorCache<'a> {
    model: &'a OpenModel,
    key: Option<Vec<usize>>,
    gen: Option<Generator>,
}

impl<'a> GeneratorCache<'a> {
    pub fn new(model: &'a OpenModel) -> Self {
        Self { model, key: None, gen: None }
    }

    pub fn at(&mut self, t: f64) -> &Generator {
        let key = self.model.schedule_key(t);
        if self.gen.is_none() || self.key.as_ref() != Some(&key) {
            self.gen = Some(self.model.generator_at(t));
            self.key = Some(key);
        }
        self.gen.as_ref().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{mode_operators, UnitTag};

    #[test]
    fn rejects_non_hermitian_hamiltonian_and_duplicates() {
        let ops = mode_operators(4).unwrap();
        let m = OpenModel::new(ops.a.layout().clone());
        assert!(m.clone().with_hamiltonian(ops.a.clone()).is_err());
        let m = m.with_channel("L", ops.a.clone()).unwrap();
        assert!(m.clone().with_channel("L", ops.a.clone()).is_err());
        assert!(matches!(m.channel("nope"), Err(SimError::UnknownChannel(_))));
    }

    #[test]
    fn generator_cache_tracks_schedule() {
        let ops = mode_operators(3).unwrap();
        let s = Schedule::from_real("c", 0.0, 1.0, &[1.0, 2.0], UnitTag::SqrtRate).unwrap();
        let m = OpenModel::new(ops.a.layout().clone())
            .with_scheduled_channel("L", ops.a.clone(), Coefficient::Scheduled(s))
            .unwrap();
        assert!(!m.is_static());
        let mut cache = GeneratorCache::new(&m);
        let k0 = cache.at(0.5).k_dense.clone();
        let k1 = cache.at(1.5).k_dense.clone();
        // -(i/2) c^2 n on the diagonal
        assert!((k0[(1, 1)] - C64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((k1[(1, 1)] - C64::new(0.0, -2.0)).norm() < 1e-15);
    }

    #[test]
    fn channel_round_trip() {
        let ops = mode_operators(3).unwrap();
        let m = OpenModel::new(ops.a.layout().clone())
            .with_channel("A", ops.a.clone())
            .unwrap()
            .with_channel("B", ops.x.clone())
            .unwrap()
            .with_channel("C", ops.p.clone())
            .unwrap();
        let (less, ch, pos) = m.without_channel("B").unwrap();
        assert_eq!(less.channel_labels(), vec!["A", "C"]);
        assert_eq!(less.with_channel_at(ch, pos).unwrap(), m);
    }
}
