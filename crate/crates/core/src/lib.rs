pub mod bounds;
pub mod cli;
pub mod dist;
pub mod error;
pub mod gaussian_tails;
pub mod genomics;
pub mod inequalities;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
