//! Moment and probability estimators for quantities of interest of the
//! uncertain field.

pub mod chance;
pub mod eigen;
pub mod sampling;
pub mod taylor;

use serde::{Deserialize, Serialize};

pub use chance::{chance_prob, indicator, logistic, logistic_slope, ChanceMode};
pub use eigen::{
    double_pass, prec_orthonormalize, rayleigh_ritz, Covariance, DenseHessian, DiagonalCovariance, EigOptions,
    EigenResult, HessianOp,
};
pub use sampling::{cv_moments, mc_moments, SampleSet};
pub use taylor::TaylorModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Quad,
    Mc,
    Cv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean (sampled estimators).
    pub stderr: Option<f64>,
    pub estimator: Estimator,
    /// Sample count, or number of eigenpairs for the Taylor estimate.
    pub samples: usize,
    pub failures: usize,
}
