//! Declarative experiment runner: one JSON config in, a directory of
//! CSV/JSON artifacts plus `manifest.json` out.

mod config;
mod run;

pub use config::*;
pub use run::*;
