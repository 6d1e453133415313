//! Gaussian random fields.

pub mod matern;

pub use matern::{anisotropy_tensor, params_from_stats, stats_from_params, MaternConfig, MaternField, RobinForm, ANISOTROPY_FLOOR};
