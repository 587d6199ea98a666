//! Simulation of measurement-based state preparation in coupled optical
//! cavities: heralded shaped single photons, postselected coherent-state
//! superpositions, no-knowledge feedback, and numerical checks of the
//! adiabatic eliminations behind the reduced models.

pub mod css;
pub mod engine;
pub mod error;
pub mod fock;
pub mod photon;
pub mod reduction;
pub mod runner;
pub mod schedule;
mod sparse;

pub use error::{Result, SimError};
pub use fock::C64;
