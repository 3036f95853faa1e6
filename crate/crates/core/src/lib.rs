//! Error exponents for testing against independence when the sensor's
//! observations reach the detector through a noisy channel.

pub mod blowup;
pub mod cli;
pub mod capacity;
pub mod error;
pub mod exponent;
pub mod io;
pub mod probcore;
pub mod rng;
pub mod sequence;
pub mod simulator;

pub use error::{Error, Result};
