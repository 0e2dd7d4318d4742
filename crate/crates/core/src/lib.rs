//! Calibrated projection confidence intervals for linear functionals `p'theta`
//! of partially identified parameters defined by separable moment
//! (in)equalities.

pub mod cli;
pub mod critval;
pub mod eam;
pub mod error;
pub mod lp;
pub mod model;
pub mod models;
pub mod moments;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
