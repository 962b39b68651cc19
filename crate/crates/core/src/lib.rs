//! Overlapping-slab solver for variable-coefficient elliptic boundary value
//! problems.

pub mod analysis;
pub mod dense;
pub mod discretize;
pub mod equilibrium;
pub mod experiment;
pub mod error;
pub mod hbs;
pub mod krylov;
mod par;
pub mod problem;
pub mod slabs;
pub mod sparse;
pub mod timing;

pub use error::{Error, Result};
