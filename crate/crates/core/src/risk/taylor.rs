//! Quadratic Taylor surrogate and its closed-form Gaussian moments.

use serde::Serialize;

use super::eigen::{Covariance, EigenResult};
use super::MomentEstimate;
use crate::linalg::dense::dot;

/// `q(m) ≈ q̄ + ⟨ḡ, m − m̄⟩ + ½ ⟨H(m − m̄), m − m̄⟩` with `H ≈ C⁻¹ΨΛΨᵀC⁻¹`.
#[derive(Clone, Debug, Serialize)]
pub struct TaylorModel {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `C ḡ`
    pub cov_grad: Vec<f64>,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub orthonormality: f64,
}

impl TaylorModel {
    pub fn new<R>(value: f64, grad: Vec<f64>, cov: &dyn Covariance, eig: &EigenResult<R>) -> Self {
        let cov_grad = cov.cov(&grad);
        Self {
            value,
            grad,
            cov_grad,
            values: eig.values.clone(),
            vectors: eig.vectors.clone(),
            orthonormality: eig.orthonormality,
        }
    }

    /// Model with explicit spectral data (no eigensolve).
    pub fn from_parts(value: f64, grad: Vec<f64>, cov_grad: Vec<f64>, values: Vec<f64>, vectors: Vec<Vec<f64>>) -> Self {
        Self { value, grad, cov_grad, values, vectors, orthonormality: 0.0 }
    }

    /// `Σ λ_j = tr(C H)` restricted to the kept modes.
    pub fn trace(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `Σ λ_j²`
    pub fn trace_sq(&self) -> f64 {
        self.values.iter().map(|l| l * l).sum()
    }

    /// `⟨ḡ, C ḡ⟩`
    pub fn grad_variance(&self) -> f64 {
        dot(&self.grad, &self.cov_grad)
    }

    /// Linear and quadratic parts at `dm = m − m̄`, given `C⁻¹ dm`.
    pub fn parts(&self, dm: &[f64], prec_dm: &[f64]) -> (f64, f64) {
        let lin = dot(&self.grad, dm);
        let quad = 0.5 * self.values.iter().zip(&self.vectors).map(|(l, v)| l * dot(v, prec_dm).powi(2)).sum::<f64>();
        (lin, quad)
    }

    pub fn eval_quad(&self, dm: &[f64], prec_dm: &[f64]) -> f64 {
        let (l, q) = self.parts(dm, prec_dm);
        self.value + l + q
    }

    /// Same as [`Self::eval_quad`] but with the exact Hessian action `H dm`.
    pub fn eval_quad_exact(&self, dm: &[f64], h_dm: &[f64]) -> f64 {
        self.value + dot(&self.grad, dm) + 0.5 * dot(dm, h_dm)
    }

    /// `E = q̄ + ½Σλ`, `V = ⟨ḡ, Cḡ⟩ + ½Σλ²`.
    pub fn moments(&self) -> MomentEstimate {
        MomentEstimate {
            mean: self.value + 0.5 * self.trace(),
            variance: self.grad_variance() + 0.5 * self.trace_sq(),
            stderr: None,
            estimator: super::Estimator::Quad,
            samples: self.values.len(),
            failures: 0,
        }
    }
}
