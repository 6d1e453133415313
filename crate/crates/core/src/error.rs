use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("value outside its domain: {0}")]
    Domain(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

pub type Result<T> = std::result::Result<T, Error>;
