pub mod baselines;
pub mod cli;
pub mod data;
pub mod density;
pub mod divergence;
pub mod error;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod sampler;

pub use error::{Error, Result};
