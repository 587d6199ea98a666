use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Layout, C64};
use crate::error::{Result, SimError};

/// Physical unit carried by an operator: plain field operators are
/// dimensionless, jump operators carry `sqrt(rate)`, Hamiltonians a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitTag {
    Dimensionless,
    SqrtRate,
    Rate,
}

/// Dense complex operator on a truncated Fock layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    layout: Layout,
    matrix: DMatrix<C64>,
    unit: UnitTag,
    hermitian: bool,
}

pub const HERMITIAN_TOL: f64 = 1e-12;

impl ModeOperator {
    pub fn new(layout: Layout, matrix: DMatrix<C64>, unit: UnitTag) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(SimError::LayoutMismatch(format!(
                "operator is {}x{} but layout {} has dimension {d}",
                matrix.nrows(),
                matrix.ncols(),
                layout.describe()
            )));
        }
        Ok(Self { layout, matrix, unit, hermitian: false })
    }

    /// Builds an operator tagged Hermitian; fails if it is not Hermitian to `HERMITIAN_TOL`.
    pub fn new_hermitian(layout: Layout, matrix: DMatrix<C64>, unit: UnitTag) -> Result<Self> {
        let mut op = Self::new(layout, matrix, unit)?;
        let dev = op.hermiticity_defect();
        if dev > HERMITIAN_TOL {
            return Err(SimError::InvalidArgument(format!(
                "operator tagged Hermitian deviates by {dev:.3e}"
            )));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(layout: &Layout) -> Self {
        let d = layout.dim();
        Self {
            layout: layout.clone(),
            matrix: DMatrix::identity(d, d),
            unit: UnitTag::Dimensionless,
            hermitian: true,
        }
    }

    pub fn zeros(layout: &Layout, unit: UnitTag) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), matrix: DMatrix::zeros(d, d), unit, hermitian: true }
    }

    /// Lifts a single-mode operator onto mode `label` of a multi-mode layout.
    pub fn embed(single: &ModeOperator, layout: &Layout, label: &str) -> Result<Self> {
        let k = layout.require_mode(label)?;
        let mode_dim = layout.modes()[k].dim;
        if single.dim() != mode_dim {
            return Err(SimError::LayoutMismatch(format!(
                "single-mode operator of dimension {} cannot act on mode `{label}` of dimension {mode_dim}",
                single.dim()
            )));
        }
        let before: usize = layout.modes()[..k].iter().map(|m| m.dim).product();
        let after = layout.stride(k);
        let m = DMatrix::<C64>::identity(before, before)
            .kronecker(&single.matrix)
            .kronecker(&DMatrix::<C64>::identity(after, after));
        Ok(Self { layout: layout.clone(), matrix: m, unit: single.unit, hermitian: single.hermitian })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unit(&self) -> UnitTag {
        self.unit
    }

    pub fn is_tagged_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn with_unit(mut self, unit: UnitTag) -> Self {
        self.unit = unit;
        self
    }

    /// Largest entrywise deviation `|A - A^dag|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
            unit: self.unit,
            hermitian: self.hermitian,
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let hermitian = self.hermitian && factor.im == 0.0;
        Self { layout: self.layout.clone(), matrix: &self.matrix * factor, unit: self.unit, hermitian }
    }

    pub fn scaled_real(&self, factor: f64) -> Self {
        self.scaled(C64::new(factor, 0.0))
    }

    pub fn compose(&self, rhs: &ModeOperator) -> Result<Self> {
        self.layout.ensure_same(&rhs.layout, "operator product")?;
        Ok(Self { layout: self.layout.clone(), matrix: &self.matrix * &rhs.matrix, unit: self.unit, hermitian: false })
    }

    pub fn plus(&self, rhs: &ModeOperator) -> Result<Self> {
        self.layout.ensure_same(&rhs.layout, "operator sum")?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix + &rhs.matrix,
            unit: self.unit,
            hermitian: self.hermitian && rhs.hermitian,
        })
    }

    /// `A^dag A`.
    pub fn dagger_times_self(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint() * &self.matrix,
            unit: match self.unit {
                UnitTag::SqrtRate => UnitTag::Rate,
                u => u,
            },
            hermitian: true,
        }
    }
}

/// The standard single-mode ladder and quadrature operators.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub a: ModeOperator,
    pub a_dag: ModeOperator,
    pub x: ModeOperator,
    pub p: ModeOperator,
    pub n: ModeOperator,
}

/// Ladder operators on a single mode labelled `a` truncated to `dim` levels:
/// `a|n> = sqrt(n)|n-1>`, `x = (a + a^dag)/sqrt2`, `p = i(a^dag - a)/sqrt2`, `n = a^dag a`.
pub fn mode_operators(dim: usize) -> Result<ModeOperators> {
    let layout = Layout::single("a", dim)?;
    ModeOperators::single(&layout)
}

impl ModeOperators {
    fn single(layout: &Layout) -> Result<Self> {
        let dim = layout.dim();
        let mut a = DMatrix::<C64>::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        let a_dag = a.adjoint();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = (&a + &a_dag) * C64::new(s, 0.0);
        let p = (&a_dag - &a) * C64::new(0.0, s);
        let n = &a_dag * &a;
        let u = UnitTag::Dimensionless;
        Ok(Self {
            a: ModeOperator::new(layout.clone(), a, u)?,
            a_dag: ModeOperator::new(layout.clone(), a_dag, u)?,
            x: ModeOperator::new_hermitian(layout.clone(), x, u)?,
            p: ModeOperator::new_hermitian(layout.clone(), p, u)?,
            n: ModeOperator::new_hermitian(layout.clone(), n, u)?,
        })
    }

    /// Operators of mode `label` embedded in a multi-mode layout.
    pub fn on(layout: &Layout, label: &str) -> Result<Self> {
        let k = layout.require_mode(label)?;
        let single_layout = Layout::single(label, layout.modes()[k].dim)?;
        let s = Self::single(&single_layout)?;
        if layout.num_modes() == 1 {
            return Ok(s);
        }
        Ok(Self {
            a: ModeOperator::embed(&s.a, layout, label)?,
            a_dag: ModeOperator::embed(&s.a_dag, layout, label)?,
            x: ModeOperator::embed(&s.x, layout, label)?,
            p: ModeOperator::embed(&s.p, layout, label)?,
            n: ModeOperator::embed(&s.n, layout, label)?,
        })
    }
}
