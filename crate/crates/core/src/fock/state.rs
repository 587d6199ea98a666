use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Layout, ModeOperator, C64};
use crate::error::{Result, SimError};

/// Default ceiling on the population of the top two Fock levels of any mode.
pub const TAIL_GUARD: f64 = 1e-6;

/// Squared norms below this are treated as an exact zero vector.
const ZERO_NORM_SQR: f64 = 1e-28;

/// Pure state over a truncated Fock layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: Layout,
    amps: DVector<C64>,
}

/// Per-mode population in the top two Fock levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub mode: String,
    pub tail: f64,
}

impl StateVector {
    pub fn new(layout: Layout, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(SimError::LayoutMismatch(format!(
                "{} amplitudes for layout {} of dimension {}",
                amps.len(),
                layout.describe(),
                layout.dim()
            )));
        }
        Ok(Self { layout, amps })
    }

    pub fn fock(layout: &Layout, occupations: &[usize]) -> Result<Self> {
        if occupations.len() != layout.num_modes() {
            return Err(SimError::LayoutMismatch("occupation tuple length".into()));
        }
        for (n, m) in occupations.iter().zip(layout.modes()) {
            if *n >= m.dim {
                return Err(SimError::InvalidArgument(format!(
                    "occupation {n} outside mode `{}` of dimension {}",
                    m.label, m.dim
                )));
            }
        }
        let mut amps = DVector::zeros(layout.dim());
        amps[layout.index_of(occupations)] = C64::new(1.0, 0.0);
        Ok(Self { layout: layout.clone(), amps })
    }

    pub fn vacuum(layout: &Layout) -> Self {
        let mut amps = DVector::zeros(layout.dim());
        amps[0] = C64::new(1.0, 0.0);
        Self { layout: layout.clone(), amps }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut DVector<C64> {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let n2 = self.amps.norm_squared();
        if !(n2 > ZERO_NORM_SQR) || !n2.is_finite() {
            return Err(SimError::ZeroVector(format!("squared norm {n2:.3e}")));
        }
        self.amps.unscale_mut(n2.sqrt());
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.layout.ensure_same(&other.layout, "inner product")?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn apply(&self, op: &ModeOperator) -> Result<StateVector> {
        self.layout.ensure_same(op.layout(), "operator application")?;
        Ok(Self { layout: self.layout.clone(), amps: op.matrix() * &self.amps })
    }

    pub fn expectation(&self, op: &ModeOperator) -> Result<C64> {
        self.layout.ensure_same(op.layout(), "expectation")?;
        Ok(self.amps.dotc(&(op.matrix() * &self.amps)))
    }

    /// Populations of each Fock level of mode `k`.
    pub fn mode_populations(&self, k: usize) -> Vec<f64> {
        let mut pops = vec![0.0; self.layout.modes()[k].dim];
        for (i, a) in self.amps.iter().enumerate() {
            pops[self.layout.occupation(i, k)] += a.norm_sqr();
        }
        pops
    }

    pub fn tail_report(&self) -> Vec<TailReport> {
        tail_report(&self.layout, |k| self.mode_populations(k))
    }

    /// Fails with `TruncationUnsafe` if any mode's top two levels hold `threshold` or more.
    pub fn check_truncation(&self, threshold: f64) -> Result<()> {
        check_tails(self.tail_report(), threshold, None)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { layout: self.layout.clone(), entries: &self.amps * self.amps.adjoint() }
    }
}

fn tail_report(layout: &Layout, pops: impl Fn(usize) -> Vec<f64>) -> Vec<TailReport> {
    layout
        .modes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let p = pops(k);
            TailReport { mode: m.label.clone(), tail: p[m.dim - 2..].iter().sum() }
        })
        .collect()
}

pub(crate) fn check_tails(report: Vec<TailReport>, threshold: f64, at: Option<f64>) -> Result<()> {
    match report.into_iter().find(|r| !(r.tail < threshold)) {
        Some(r) => Err(SimError::TruncationUnsafe { mode: r.mode, tail: r.tail, at }),
        None => Ok(()),
    }
}

/// Density operator over a truncated Fock layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    layout: Layout,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(layout: Layout, entries: DMatrix<C64>) -> Result<Self> {
        let d = layout.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(SimError::LayoutMismatch(format!(
                "density matrix is {}x{} but layout {} has dimension {d}",
                entries.nrows(),
                entries.ncols(),
                layout.describe()
            )));
        }
        Ok(Self { layout, entries })
    }

    pub fn zeros(layout: &Layout) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), entries: DMatrix::zeros(d, d) }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn normalized(mut self) -> Result<Self> {
        let tr = self.trace().re;
        if !(tr.abs() > 1e-300) {
            return Err(SimError::ZeroVector("density matrix with zero trace".into()));
        }
        self.entries.unscale_mut(tr);
        Ok(self)
    }

    /// `Tr(op rho)`.
    pub fn expectation(&self, op: &ModeOperator) -> Result<C64> {
        self.layout.ensure_same(op.layout(), "expectation")?;
        Ok((op.matrix() * &self.entries).trace())
    }

    /// `<psi|rho|psi>`.
    pub fn overlap_with_pure(&self, psi: &StateVector) -> Result<f64> {
        self.layout.ensure_same(psi.layout(), "overlap")?;
        Ok(psi.amplitudes().dotc(&(&self.entries * psi.amplitudes())).re)
    }

    pub fn mode_populations(&self, k: usize) -> Vec<f64> {
        let mut pops = vec![0.0; self.layout.modes()[k].dim];
        for i in 0..self.dim() {
            pops[self.layout.occupation(i, k)] += self.entries[(i, i)].re;
        }
        pops
    }

    pub fn tail_report(&self) -> Vec<TailReport> {
        tail_report(&self.layout, |k| self.mode_populations(k))
    }

    pub fn check_truncation(&self, threshold: f64, at: Option<f64>) -> Result<()> {
        check_tails(self.tail_report(), threshold, at)
    }

    /// Partial trace keeping only the modes named in `keep` (in layout order).
    pub fn reduce_to(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let layout = &self.layout;
        let kept: Vec<usize> = keep.iter().map(|l| layout.require_mode(l)).collect::<Result<_>>()?;
        let mut kept_sorted = kept.clone();
        kept_sorted.sort_unstable();
        kept_sorted.dedup();
        if kept_sorted.len() != kept.len() {
            return Err(SimError::InvalidArgument("duplicate mode in partial trace".into()));
        }
        let sub = Layout::new(kept_sorted.iter().map(|&k| {
            let m = &layout.modes()[k];
            (m.label.clone(), m.dim)
        }))?;
        let traced: Vec<usize> = (0..layout.num_modes()).filter(|k| !kept_sorted.contains(k)).collect();
        let traced_dim: usize = traced.iter().map(|&k| layout.modes()[k].dim).product();
        let traced_layout_dims: Vec<usize> = traced.iter().map(|&k| layout.modes()[k].dim).collect();

        let d_sub = sub.dim();
        let mut out = DMatrix::<C64>::zeros(d_sub, d_sub);
        let mut occ = vec![0usize; layout.num_modes()];
        let full_index = |sub_idx: usize, env_idx: usize, occ: &mut Vec<usize>| {
            let sub_occ = sub.occupations(sub_idx);
            for (pos, &k) in kept_sorted.iter().enumerate() {
                occ[k] = sub_occ[pos];
            }
            let mut rem = env_idx;
            for (pos, &k) in traced.iter().enumerate().rev() {
                occ[k] = rem % traced_layout_dims[pos];
                rem /= traced_layout_dims[pos];
            }
            layout.index_of(occ)
        };
        for env in 0..traced_dim {
            let rows: Vec<usize> = (0..d_sub).map(|s| full_index(s, env, &mut occ)).collect();
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &rj) in rows.iter().enumerate() {
                    out[(i, j)] += self.entries[(ri, rj)];
                }
            }
        }
        DensityMatrix::new(sub, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_and_zero_vector() {
        let l = Layout::single("a", 4).unwrap();
        let s = StateVector::new(l.clone(), DVector::from_element(4, C64::new(2.0, 1.0))).unwrap();
        let s = s.normalize().unwrap();
        assert!((s.norm_squared() - 1.0).abs() < 1e-12);
        let z = StateVector::new(l, DVector::zeros(4)).unwrap();
        assert!(matches!(z.normalize(), Err(SimError::ZeroVector(_))));
    }

    #[test]
    fn tail_guard_flags_top_levels() {
        let l = Layout::single("a", 6).unwrap();
        assert!(StateVector::fock(&l, &[3]).unwrap().check_truncation(TAIL_GUARD).is_ok());
        let err = StateVector::fock(&l, &[4]).unwrap().check_truncation(TAIL_GUARD);
        assert!(matches!(err, Err(SimError::TruncationUnsafe { .. })));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let l = Layout::new([("e", 3), ("h", 2)]).unwrap();
        let psi = StateVector::fock(&l, &[2, 1]).unwrap();
        let rho_e = psi.to_density().reduce_to(&["e"]).unwrap();
        assert_eq!(rho_e.dim(), 3);
        assert!((rho_e.entries()[(2, 2)].re - 1.0).abs() < 1e-15);
        assert!((rho_e.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_invariants() {
        let l = Layout::single("a", 5).unwrap();
        let amps = DVector::from_fn(5, |i, _| C64::new(1.0 / (i as f64 + 1.0), 0.3 * i as f64));
        let rho = StateVector::new(l, amps).unwrap().normalize().unwrap().to_density();
        assert!(rho.hermiticity_defect() < 1e-15);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }
}
