//! Generalized-coordinate machinery, LTI simulation and free-energy
//! estimation for precision-modulated perception experiments.

pub mod benchmark;
pub mod dem;
pub mod error;
pub mod gencoords;
pub mod ltisim;

pub use error::{Error, Result};
