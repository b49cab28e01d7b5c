pub mod cli;
pub mod curve_models;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod gp_core;
pub mod math_stats;
mod optim;
pub mod priors;
pub mod synthetic;

pub use error::{Error, Result};
