use nalgebra::DMatrix;

use super::OpenModel;
use crate::error::{Result, SimError};
use crate::fock::{DensityMatrix, ModeOperator, C64};

/// Smallest `Tr(r rho r^dag)` accepted by the jump map.
pub const MIN_JUMP_PROBABILITY: f64 = 1e-14;

/// `-i[H, rho] + sum_j (L_j rho L_j^dag - {L_j^dag L_j, rho}/2)` at time `t`,
/// evaluated densely as written.
pub fn lindblad_derivative_at(model: &OpenModel, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    model.layout().ensure_same(rho.layout(), "Lindblad derivative")?;
    let r = rho.entries();
    let h = model.hamiltonian_at(t);
    let mi = C64::new(0.0, -1.0);
    let mut out = (&h * r - r * &h) * mi;
    for l in model.channel_ops_at(t) {
        let ld = l.adjoint();
        let ldl = &ld * &l;
        out += &l * r * &ld - (&ldl * r + r * &ldl) * C64::new(0.5, 0.0);
    }
    DensityMatrix::new(rho.layout().clone(), out)
}

pub fn lindblad_derivative(model: &OpenModel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    lindblad_derivative_at(model, rho, 0.0)
}

/// `H[r] rho = r rho + rho r^dag - Tr(r rho + rho r^dag) rho`.
pub fn superop_h(r: &ModeOperator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    r.layout().ensure_same(rho.layout(), "superoperator H")?;
    let m = rho.entries();
    let a = r.matrix() * m + m * r.matrix().adjoint();
    let tr = a.trace();
    DensityMatrix::new(rho.layout().clone(), a - m * tr)
}

/// `G[r] rho = r rho r^dag / Tr(r rho r^dag) - rho`.
pub fn superop_g(r: &ModeOperator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let post = jump_map(r, rho)?;
    DensityMatrix::new(rho.layout().clone(), post.entries() - rho.entries())
}

/// The post-jump state `r rho r^dag / Tr(r rho r^dag)`, i.e. `rho + G[r] rho`.
pub fn jump_map(r: &ModeOperator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    r.layout().ensure_same(rho.layout(), "superoperator G")?;
    let num: DMatrix<C64> = r.matrix() * rho.entries() * r.matrix().adjoint();
    let p = num.trace().re;
    if !(p > MIN_JUMP_PROBABILITY) {
        return Err(SimError::ZeroProbabilityJump(p));
    }
    DensityMatrix::new(rho.layout().clone(), num.unscale(p))
}
