//! Chance-constrained optimal design of a porous thermal break under a
//! spatially correlated random porosity field.
//!
//! The crate is layered bottom-up: [`linalg`] and [`fem`] provide the
//! discretization, [`forward`] the coupled thermomechanical model,
//! [`field`] the Matérn prior, [`sensitivity`] the adjoint derivatives,
//! [`risk`] the moment and chance estimators, and [`optim`] the design loop.

pub mod error;
pub mod fem;
pub mod field;
pub mod forward;
pub mod linalg;
pub mod optim;
pub mod par;
pub mod risk;
pub mod sensitivity;

pub use error::{Error, Result};
