pub mod asymptotics;
pub mod error;
pub mod laplace;
pub mod levy;
pub mod logistic;
pub mod mc;
pub mod mechanisms;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
