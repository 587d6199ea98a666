use serde::{Deserialize, Serialize};

use crate::engine::OpenModel;
use crate::error::{Result, SimError};
use crate::fock::{mode_operators, DensityMatrix, ModeOperator, ModeOperators, UnitTag, C64};

/// Channel labels used by [`css_model`].
pub const L_PLUS: &str = "+";
pub const L_MINUS: &str = "-";
pub const L_EMISSION: &str = "e";
pub const L_HERALD: &str = "h";

/// Pump `Lambda`, heralding output rate `kappa_h` and cavity truncation.
/// The cavity decay is tied to the gain, `kappa_e = gamma = 4 Lambda^2 / kappa_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CssParams {
    pub lambda: f64,
    pub kappa_h: f64,
    pub dim: usize,
}

impl CssParams {
    pub fn new(lambda: f64, kappa_h: f64, dim: usize) -> Result<Self> {
        let p = Self { lambda, kappa_h, dim };
        p.validate()?;
        Ok(p)
    }

    /// `Lambda = 1`, `kappa_h = 4`, so `gamma = 1`.
    pub fn unit_gamma(dim: usize) -> Result<Self> {
        Self::new(1.0, 4.0, dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) || !(self.kappa_h > 0.0 && self.kappa_h.is_finite()) {
            return Err(SimError::InvalidArgument(format!(
                "css parameters need Lambda > 0 and kappa_h > 0, got {} and {}",
                self.lambda, self.kappa_h
            )));
        }
        if self.dim < 4 {
            return Err(SimError::InvalidDimension(self.dim));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        4.0 * self.lambda * self.lambda / self.kappa_h
    }

    pub fn kappa_e(&self) -> f64 {
        self.gamma()
    }

    pub fn operators(&self) -> Result<ModeOperators> {
        mode_operators(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CssChannels {
    pub l_e: ModeOperator,
    pub l_h: ModeOperator,
    pub l_plus: ModeOperator,
    pub l_minus: ModeOperator,
}

/// `L_e = sqrt(gamma) a`, `L_h = sqrt(gamma) a^dag` and their interfered
/// combinations `L_+ = (L_e + L_h)/sqrt2 = sqrt(gamma) x`,
/// `L_- = i (L_e - L_h)/sqrt2 = -sqrt(gamma) p`.
pub fn css_channels(p: &CssParams) -> Result<CssChannels> {
    p.validate()?;
    let ops = p.operators()?;
    let g = p.gamma().sqrt();
    let l_e = ops.a.scaled_real(g).with_unit(UnitTag::SqrtRate);
    let l_h = ops.a_dag.scaled_real(g).with_unit(UnitTag::SqrtRate);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = (l_e.matrix() + l_h.matrix()) * C64::new(s, 0.0);
    let minus = (l_e.matrix() - l_h.matrix()) * C64::new(0.0, s);
    let layout = ops.a.layout().clone();
    Ok(CssChannels {
        l_plus: ModeOperator::new_hermitian(layout.clone(), plus, UnitTag::SqrtRate)?,
        l_minus: ModeOperator::new_hermitian(layout, minus, UnitTag::SqrtRate)?,
        l_e,
        l_h,
    })
}

/// Which pair of detectors unravels the cavity dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSet {
    /// `{L_+, L_-}` after the beam splitter.
    Quadrature,
    /// `{L_e, L_h}` before it.
    Mode,
}

/// Cavity model with `H = 0` and the chosen channel pair.
pub fn css_model(p: &CssParams, set: ChannelSet) -> Result<OpenModel> {
    let ch = css_channels(p)?;
    let model = OpenModel::new(ch.l_e.layout().clone());
    match set {
        ChannelSet::Quadrature => model.with_channel(L_PLUS, ch.l_plus)?.with_channel(L_MINUS, ch.l_minus),
        ChannelSet::Mode => model.with_channel(L_EMISSION, ch.l_e)?.with_channel(L_HERALD, ch.l_h),
    }
}

/// Detectors contributing to the no-jump drift in [`no_jump_generator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoJumpChannels {
    Both,
    /// `L_-` frozen by feedback.
    PlusOnly,
}

/// Drift of the conditional state between detections.
///
/// `Both`: `gamma (2<n> rho - n rho - rho n)`.
/// `PlusOnly`: `(gamma/2) (2<x^2> rho - x^2 rho - rho x^2)`.
///
/// The `Both` form uses `L_+^2 + L_-^2 = gamma (2n + 1)`, which fails on the
/// top truncated level; states there are outside its domain.
pub fn no_jump_generator(p: &CssParams, which: NoJumpChannels, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let ops = p.operators()?;
    ops.a.layout().ensure_same(rho.layout(), "no-jump generator")?;
    let (op, scale) = match which {
        NoJumpChannels::Both => (ops.n, p.gamma()),
        NoJumpChannels::PlusOnly => (ops.x.compose(&ops.x)?, p.gamma() / 2.0),
    };
    Ok(anticommutator_drift(op.matrix(), scale, rho))
}

/// `sum_j (<L_j^dag L_j> rho - (1/2){L_j^dag L_j, rho})` over the model's channels.
pub fn no_jump_generator_of(model: &OpenModel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    model.layout().ensure_same(rho.layout(), "no-jump generator")?;
    let d = rho.dim();
    let mut m = nalgebra::DMatrix::<C64>::zeros(d, d);
    for l in model.channel_ops_at(0.0) {
        m += l.adjoint() * l;
    }
    Ok(anticommutator_drift(&m, 0.5, rho))
}

// scale * (2<m> rho - m rho - rho m)
fn anticommutator_drift(m: &nalgebra::DMatrix<C64>, scale: f64, rho: &DensityMatrix) -> DensityMatrix {
    let r = rho.entries();
    let mean = (m * r).trace();
    let out = (r * (mean * 2.0) - m * r - r * m) * C64::new(scale, 0.0);
    DensityMatrix::new(rho.layout().clone(), out).expect("same layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{lindblad_derivative, superop_h};
    use crate::fock::{coherent_state, StateVector};

    fn params() -> CssParams {
        CssParams::unit_gamma(16).unwrap()
    }

    // support well below the truncation edge
    fn low_state() -> DensityMatrix {
        let layout = params().operators().unwrap().a.layout().clone();
        let amps = nalgebra::DVector::from_fn(16, |n, _| if n < 9 { C64::new(1.0 / (1.0 + n as f64), 0.3 * n as f64 - 1.0) } else { C64::new(0.0, 0.0) });
        StateVector::new(layout, amps).unwrap().normalize().unwrap().to_density()
    }

    fn max_abs(m: &nalgebra::DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gamma_from_pump() {
        assert_eq!(params().gamma(), 1.0);
        assert_eq!(params().kappa_e(), 1.0);
        assert!(CssParams::new(0.0, 4.0, 10).is_err());
    }

    #[test]
    fn interfered_channels_are_quadratures() {
        let p = CssParams::new(1.5, 2.0, 12).unwrap();
        let ch = css_channels(&p).unwrap();
        let ops = p.operators().unwrap();
        let g = p.gamma().sqrt();
        assert!(max_abs(&(ch.l_plus.matrix() - ops.x.matrix() * C64::new(g, 0.0))) < 1e-14);
        assert!(max_abs(&(ch.l_minus.matrix() + ops.p.matrix() * C64::new(g, 0.0))) < 1e-14);
        assert!(ch.l_plus.hermiticity_defect() < 1e-14 && ch.l_minus.hermiticity_defect() < 1e-14);
    }

    #[test]
    fn quadrature_squares_sum_to_number() {
        let p = params();
        let ch = css_channels(&p).unwrap();
        let ops = p.operators().unwrap();
        let s = ch.l_plus.matrix() * ch.l_plus.matrix() + ch.l_minus.matrix() * ch.l_minus.matrix();
        let want = ops.n.matrix() * C64::new(2.0, 0.0) + nalgebra::DMatrix::identity(16, 16);
        // last row/column differ through truncation
        let d = s - want;
        assert!(max_abs(&d.view((0, 0), (15, 15)).into_owned()) < 1e-12);
    }

    #[test]
    fn both_unravelings_share_a_generator() {
        let p = params();
        let rho = coherent_state(C64::new(0.8, -0.5), 16).unwrap().to_density();
        let a = lindblad_derivative(&css_model(&p, ChannelSet::Quadrature).unwrap(), &rho).unwrap();
        let b = lindblad_derivative(&css_model(&p, ChannelSet::Mode).unwrap(), &rho).unwrap();
        assert!(max_abs(&(a.entries() - b.entries())) < 1e-12);
    }

    #[test]
    fn vacuum_has_no_drift() {
        let p = params();
        let rho = StateVector::vacuum(p.operators().unwrap().a.layout()).to_density();
        let d = no_jump_generator(&p, NoJumpChannels::Both, &rho).unwrap();
        assert!(max_abs(d.entries()) < 1e-15);
    }

    #[test]
    fn drift_favours_lowest_fock_component() {
        let p = params();
        let layout = p.operators().unwrap().a.layout().clone();
        let mut amps = nalgebra::DVector::zeros(16);
        amps[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amps[4] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = StateVector::new(layout, amps).unwrap().to_density();
        let d = no_jump_generator(&p, NoJumpChannels::Both, &rho).unwrap();
        assert!(d.entries()[(0, 0)].re > 0.0);
        assert!(d.entries()[(4, 4)].re < 0.0);
    }

    #[test]
    fn closed_forms_match_raw_superoperators() {
        let p = params();
        let ch = css_channels(&p).unwrap();
        let rho = low_state();
        let half = |l: &ModeOperator| l.dagger_times_self().scaled_real(0.5);
        let both = superop_h(&half(&ch.l_plus), &rho).unwrap().entries() + superop_h(&half(&ch.l_minus), &rho).unwrap().entries();
        let closed = no_jump_generator(&p, NoJumpChannels::Both, &rho).unwrap();
        assert!(max_abs(&(closed.entries() + &both)) < 1e-12);
        let plus = superop_h(&half(&ch.l_plus), &rho).unwrap();
        let closed = no_jump_generator(&p, NoJumpChannels::PlusOnly, &rho).unwrap();
        assert!(max_abs(&(closed.entries() + plus.entries())) < 1e-12);
        let generic = no_jump_generator_of(&css_model(&p, ChannelSet::Quadrature).unwrap(), &rho).unwrap();
        assert!(max_abs(&(generic.entries() + &both)) < 1e-12);
    }
}
