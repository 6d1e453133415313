//! Sparse storage, direct factorization and small dense helpers.

pub mod dense;
pub mod skyline;
pub mod sparse;

pub use skyline::SkylineCholesky;
pub use sparse::{CsrMatrix, TripletBuilder};
