//! Doubly robust treatment-effect estimation with Gaussian-copula control
//! functions for endogenous covariates.

pub mod copula;
pub mod dataio;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod numerics;
pub mod simulation;

pub use error::{Error, ErrorClass, Result};
