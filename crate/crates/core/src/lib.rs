//! Periodic homogenization with a localized defect: correctors, the
//! homogenized tensor, the flux-corrector potential, two-scale remainders
//! and convergence-rate studies.

pub mod cache;
pub mod coefficients;
pub mod commands;
pub mod correctors;
pub mod error;
pub mod fit;
pub mod grid;
pub mod homogenization;
pub mod oracle;
pub mod quadrature;
pub mod solver;
pub mod sources;
pub mod study;
pub mod twoscale;

pub use error::{Error, Result};
