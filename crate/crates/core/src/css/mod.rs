//! Quadrature-jump cat-state generation: channels, postselection, jump
//! sequences and no-knowledge feedback.

mod channels;
mod nkf;
mod postselect;
mod sequence;

pub use channels::*;
pub use nkf::*;
pub use postselect::*;
pub use sequence::*;
