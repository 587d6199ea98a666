//! Truncated Fock-space linear algebra.

mod layout;
mod operator;
mod phase_space;
mod special;
mod state;
mod states;

pub use num_complex::Complex64 as C64;

pub use layout::{Layout, Mode};
pub use operator::{mode_operators, ModeOperator, ModeOperators, UnitTag, HERMITIAN_TOL};
pub use phase_space::{
    density_peaks, parity_expectation, position_amplitudes, position_density, wigner, wigner_integral,
    UniformGrid,
};
pub use special::{css_fidelity_closed, gamma_half, kummer_terminating};
pub use state::{DensityMatrix, StateVector, TailReport, TAIL_GUARD};
pub(crate) use state::check_tails;
pub use states::{cat_state, coherent_state, fidelity, quadrature_jump_state, Parity, SINGLE_MODE};
