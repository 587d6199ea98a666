use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{mode_operators, Layout, StateVector, C64, TAIL_GUARD};
use crate::error::{Result, SimError};

/// Label of the mode used by the single-mode constructors.
pub const SINGLE_MODE: &str = "a";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: u32) -> Self {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

fn coherent_amplitudes(alpha: C64, dim: usize) -> DVector<C64> {
    let mut amps = DVector::zeros(dim);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        amps[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    amps
}

fn truncation_heuristic(alpha: C64, dim: usize) -> Result<()> {
    if alpha.norm_sqr() > dim as f64 / 4.0 {
        return Err(SimError::TruncationUnsafe {
            mode: SINGLE_MODE.into(),
            tail: f64::NAN,
            at: None,
        }
        .context(format!("|alpha|^2 = {:.4} exceeds N/4 = {:.4}", alpha.norm_sqr(), dim as f64 / 4.0)));
    }
    Ok(())
}

/// Coherent state `|alpha>` truncated to `dim` levels and renormalized.
pub fn coherent_state(alpha: C64, dim: usize) -> Result<StateVector> {
    let layout = Layout::single(SINGLE_MODE, dim)?;
    truncation_heuristic(alpha, dim)?;
    let s = StateVector::new(layout, coherent_amplitudes(alpha, dim))?;
    s.check_truncation(TAIL_GUARD)?;
    s.normalize()
}

/// Normalized `|alpha> + (-1)^parity |-alpha>`.
pub fn cat_state(alpha: C64, parity: Parity, dim: usize) -> Result<StateVector> {
    let layout = Layout::single(SINGLE_MODE, dim)?;
    truncation_heuristic(alpha, dim)?;
    let plus = coherent_amplitudes(alpha, dim);
    let sign = parity.sign();
    // |-alpha> has amplitudes (-1)^n c_n; keep the matching parity exactly
    let amps = DVector::from_fn(dim, |n, _| {
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        if (1.0 + sign * s) == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            plus[n] * 2.0
        }
    });
    let s = StateVector::new(layout, amps)?;
    let s = s.normalize().map_err(|e| e.context("cat state with alpha = 0 and odd parity"))?;
    s.check_truncation(TAIL_GUARD)?;
    Ok(s)
}

/// Normalized `x^n |0>`: the cavity state after `n` instantaneous `L_+` detections.
pub fn quadrature_jump_state(n_jumps: u32, dim: usize) -> Result<StateVector> {
    let needed = 2 * n_jumps as usize + 4;
    if dim < needed {
        return Err(SimError::TruncationUnsafe { mode: SINGLE_MODE.into(), tail: f64::NAN, at: None }
            .context(format!("x^{n_jumps}|0> needs at least {needed} Fock levels, got {dim}")));
    }
    let ops = mode_operators(dim)?;
    let mut s = StateVector::vacuum(ops.x.layout());
    for _ in 0..n_jumps {
        s = s.apply(&ops.x)?.normalize()?;
    }
    Ok(s)
}

/// `|<psi|phi>|`.
pub fn fidelity(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    Ok(psi.inner(phi)?.norm())
}
