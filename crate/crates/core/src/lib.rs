//! Fast/slow partitioned IMEX time integration for the compressible Euler
//! equations with gravity.

pub mod cases;
pub mod driver;
pub mod error;
pub mod integrate;
pub mod io;
pub mod linsolve;
pub mod physics;
pub mod spatial;
pub mod state;
pub mod tableau;

pub use error::{Error, Location, Result};
