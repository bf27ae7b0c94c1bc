pub mod cli;
pub mod discrete_ops;
pub mod error;
pub mod kernel;
pub mod problem;
pub mod stepper;
pub mod validation;

pub use error::{Error, Result};
