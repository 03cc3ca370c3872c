pub mod agent;
pub mod cli;
pub mod config;
pub mod critic;
pub mod diffusion;
pub mod envs;
pub mod error;
pub mod eval;
pub mod ndmath;
pub mod par;
pub mod plot;
pub mod policy;
pub mod rng;

pub use error::{DqsError, Result};
