pub mod baselines;
pub mod error;
pub mod features;
pub mod harness;
pub mod market_data;
pub mod neural;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
