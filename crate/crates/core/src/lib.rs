pub mod analysis;
pub mod averages;
pub mod cli;
pub mod error;
pub mod euler;
pub mod linalg;
pub mod model;
pub mod propagate;
pub mod pulses;
pub mod quadrature;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
