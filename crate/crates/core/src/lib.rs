pub mod ar_baseline;
pub mod container;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod neural;
pub mod reconstruct;
pub mod texture_repr;

pub use error::{Error, Result};
