pub mod error;
pub mod eval;
pub mod event;
pub mod field_fit;
pub mod finder;
pub mod geometry;
pub mod grid;
pub mod helix;
pub mod synth;

pub use error::{Error, Result};
