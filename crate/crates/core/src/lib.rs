pub mod association;
pub mod baselines;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nets;
pub mod nn;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
