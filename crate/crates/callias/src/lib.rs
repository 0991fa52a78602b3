pub mod bessel;
pub mod clifford;
pub mod cli;
pub mod density;
pub mod dirac_example;
pub mod divdiff;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod moi;
pub mod quad;
pub mod ssf;
pub mod transform;

pub use error::{Error, Result};
