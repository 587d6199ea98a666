//! Heralded single-photon creation and detuning-shaped readout.

mod herald;
mod readout;

pub use herald::*;
pub use readout::*;
