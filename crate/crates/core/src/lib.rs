pub mod error;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub mod critic;
pub mod data;
pub mod train;
pub mod eval;
