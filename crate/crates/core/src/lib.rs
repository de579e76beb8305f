pub mod calculus;
pub mod energy;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod linalg;
pub mod rearrangement;
pub mod simulator;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
