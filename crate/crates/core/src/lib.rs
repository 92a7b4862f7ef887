pub mod bounds;
pub mod error;
pub mod fock;
pub mod one_particle;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
