//! Fisher information and Cramér-Rao bounds for multivariate location-scale
//! models under elliptically symmetric distributions, plus a Gamma
//! counterexample family.

pub mod error;
pub mod special;
pub mod quad;
pub mod model;
pub mod generator;
pub mod gamma;
pub mod fim;
pub mod oracle;
pub mod crb;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
