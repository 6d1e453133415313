//! Adjoint-based derivatives of a quantity of interest with respect to the
//! uncertain field `m` at a fixed design `d`.
//!
//! The porosity is `φ = sigmoid(d + m)`, so every `d`-derivative equals the
//! corresponding `m`-derivative; the third-order terms needed by the design
//! gradient live here as well. Internally everything is computed for the
//! reduced functional `q̃(φ) = q(x(φ), φ)` and mapped through the sigmoid.

use crate::error::Result;
use crate::forward::{porosity_map, sigmoid_derivatives, ForwardModel, Linearization, Qoi, StateSolution};
use crate::linalg::dense::{axpy, dot, hadamard};

/// Solved state and factored Jacobian at `(d, m̄)`.
pub struct LinearizationPoint<'a> {
    lin: Linearization<'a>,
    design: Vec<f64>,
    mean: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl<'a> LinearizationPoint<'a> {
    pub fn new(model: &'a ForwardModel, design: &[f64], mean: &[f64]) -> Result<Self> {
        let phi = porosity_map(design, mean)?;
        let lin = model.linearize(&phi)?;
        let (s1, s2, s3) = sigmoid_derivatives(design, mean);
        Ok(Self { lin, design: design.to_vec(), mean: mean.to_vec(), s1, s2, s3 })
    }

    pub fn model(&self) -> &'a ForwardModel {
        self.lin.model()
    }

    pub fn design(&self) -> &[f64] {
        &self.design
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn phi(&self) -> &[f64] {
        self.lin.phi()
    }

    pub fn state(&self) -> &StateSolution {
        &self.lin.state
    }

    pub fn linearization(&self) -> &Linearization<'a> {
        &self.lin
    }

    /// `dφ/dm` — the sigmoid slope at every node.
    pub fn slope(&self) -> &[f64] {
        &self.s1
    }

    /// Solves the adjoint of `qoi` and returns its derivative handle.
    pub fn qoi<'p>(&'p self, qoi: &'p dyn Qoi) -> QoiPoint<'p, 'a> {
        let x = &self.lin.state.x;
        let phi = self.lin.phi();
        let value = qoi.value(x, phi);
        let mut rhs = qoi.grad_x(x, phi);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let adjoint = self.lin.solve_jac_t(&rhs);
        let mut grad_phi = qoi.grad_phi(x, phi);
        axpy(1.0, &self.lin.r_phi_t(&adjoint), &mut grad_phi);
        let grad_m = hadamard(&self.s1, &grad_phi);
        QoiPoint { point: self, qoi, value, adjoint, grad_phi, grad_m }
    }
}

/// Incremental state and adjoint for one porosity direction; linear in the
/// direction, so Ritz combinations can be formed without new solves.
#[derive(Clone, Debug)]
pub struct IncrementalPair {
    pub dir_phi: Vec<f64>,
    pub state: Vec<f64>,
    pub adjoint: Vec<f64>,
}

impl IncrementalPair {
    /// `Σ c_i pairs_i`
    pub fn combine(coeffs: &[f64], pairs: &[IncrementalPair]) -> IncrementalPair {
        let mut out = IncrementalPair {
            dir_phi: vec![0.0; pairs[0].dir_phi.len()],
            state: vec![0.0; pairs[0].state.len()],
            adjoint: vec![0.0; pairs[0].adjoint.len()],
        };
        for (c, p) in coeffs.iter().zip(pairs) {
            axpy(*c, &p.dir_phi, &mut out.dir_phi);
            axpy(*c, &p.state, &mut out.state);
            axpy(*c, &p.adjoint, &mut out.adjoint);
        }
        out
    }
}

/// One `β F'''[w, w, ·]` contribution to a design gradient.
pub struct CurvatureTerm {
    pub weight: f64,
    /// `w` in parameter space.
    pub dir: Vec<f64>,
    /// Incremental pair for `w` (porosity direction `s' ⊙ w`).
    pub pair: IncrementalPair,
}

/// Adjoint-solved quantity of interest at a linearization point.
pub struct QoiPoint<'p, 'a> {
    point: &'p LinearizationPoint<'a>,
    qoi: &'p dyn Qoi,
    value: f64,
    adjoint: Vec<f64>,
    grad_phi: Vec<f64>,
    grad_m: Vec<f64>,
}

impl<'p, 'a> QoiPoint<'p, 'a> {
    pub fn point(&self) -> &'p LinearizationPoint<'a> {
        self.point
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn adjoint(&self) -> &[f64] {
        &self.adjoint
    }

    /// Gradient with respect to `φ` of the reduced functional.
    pub fn grad_phi(&self) -> &[f64] {
        &self.grad_phi
    }

    /// `∂q̄/∂m` (also `∂q̄/∂d`).
    pub fn grad_m(&self) -> &[f64] {
        &self.grad_m
    }

    fn x(&self) -> &[f64] {
        &self.point.lin.state.x
    }

    fn phi(&self) -> &[f64] {
        self.point.lin.phi()
    }

    /// Incremental state and adjoint for a porosity direction (two solves).
    pub fn incremental_phi(&self, a: &[f64]) -> IncrementalPair {
        let lin = &self.point.lin;
        let (x, phi) = (self.x(), self.phi());
        let mut rhs = lin.r_phi(a);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let xa = lin.solve_jac(&rhs);
        let mut b = self.qoi.hess_xx(x, phi, &xa);
        axpy(1.0, &self.qoi.hess_xphi(x, phi, a), &mut b);
        axpy(1.0, &lin.jac_lin_t(a, &self.adjoint), &mut b);
        b.iter_mut().for_each(|v| *v = -*v);
        let va = lin.solve_jac_t(&b);
        IncrementalPair { dir_phi: a.to_vec(), state: xa, adjoint: va }
    }

    /// Incremental pair for a parameter-space direction `w`.
    pub fn incremental(&self, w: &[f64]) -> IncrementalPair {
        self.incremental_phi(&hadamard(&self.point.s1, w))
    }

    /// Reduced `φ`-Hessian applied to the pair's direction; no solves.
    pub fn hess_phi_from(&self, pair: &IncrementalPair) -> Vec<f64> {
        let lin = &self.point.lin;
        let mut h = self.qoi.hess_phix(self.x(), self.phi(), &pair.state);
        axpy(1.0, &lin.r_phi_t(&pair.adjoint), &mut h);
        axpy(1.0, &lin.jac_grad(&pair.state, &self.adjoint), &mut h);
        h
    }

    /// `H_m w` from an already solved pair for `w`.
    pub fn hess_from(&self, w: &[f64], pair: &IncrementalPair) -> Vec<f64> {
        let h = self.hess_phi_from(pair);
        let s = &self.point;
        (0..w.len()).map(|i| s.s1[i] * h[i] + s.s2[i] * w[i] * self.grad_phi[i]).collect()
    }

    /// `H_m w` (two solves).
    pub fn hess_action(&self, w: &[f64]) -> Vec<f64> {
        self.hess_action_full(w).0
    }

    pub fn hess_action_full(&self, w: &[f64]) -> (Vec<f64>, IncrementalPair) {
        let pair = self.incremental(w);
        (self.hess_from(w, &pair), pair)
    }

    /// `∇_c [ Σ_l β_l F'''[w_l, w_l, c] + F''[z, c] ]` for `F(t) = q̃(sigmoid(t))`,
    /// using two further solves regardless of the number of terms.
    pub fn curvature_gradient(&self, terms: &[CurvatureTerm], z: &[f64]) -> Vec<f64> {
        let lin = &self.point.lin;
        let (x, phi) = (self.x(), self.phi());
        let (s1, s2, s3) = (&self.point.s1, &self.point.s2, &self.point.s3);
        let np = z.len();
        let ns = x.len();
        let q = self.qoi;

        // porosity direction of the aggregated Hessian action
        let mut e: Vec<f64> = (0..np).map(|i| s1[i] * z[i]).collect();
        let mut w2 = vec![0.0; np];
        for t in terms {
            for i in 0..np {
                w2[i] += t.weight * t.dir[i] * t.dir[i];
            }
        }
        for i in 0..np {
            e[i] += s2[i] * w2[i];
        }

        // forward: X = J⁻¹(-2 Σ β K'(a) x_a - r_φ e)
        let mut rhs = lin.r_phi(&e);
        let mut direct = vec![0.0; np];
        let mut adj_rhs = vec![0.0; ns];
        let mut second = vec![0.0; np];
        for t in terms {
            let a = &t.pair.dir_phi;
            let xa = &t.pair.state;
            axpy(2.0 * t.weight, &lin.jac_lin(a, xa), &mut rhs);
            // μ = -2 v̂
            let mu: Vec<f64> = t.pair.adjoint.iter().map(|v| -2.0 * v).collect();
            axpy(t.weight, &q.third_xxphi(x, phi, xa, xa), &mut direct);
            axpy(-t.weight, &lin.jac_grad(xa, &mu), &mut direct);
            axpy(t.weight, &q.third_xxx(x, phi, xa, xa), &mut adj_rhs);
            axpy(2.0 * t.weight, &q.third_xphix(x, phi, xa, a), &mut adj_rhs);
            axpy(-t.weight, &lin.jac_lin_t(a, &mu), &mut adj_rhs);
            let h = self.hess_phi_from(&t.pair);
            for i in 0..np {
                second[i] += 2.0 * t.weight * s2[i] * t.dir[i] * h[i];
            }
        }
        rhs.iter_mut().for_each(|v| *v = -*v);
        let big_x = lin.solve_jac(&rhs);

        // adjoint: Y = J⁻ᵀ(Σβ[...] + q_xx X + q_xφ e + K'(e)ᵀ v)
        axpy(1.0, &q.hess_xx(x, phi, &big_x), &mut adj_rhs);
        axpy(1.0, &q.hess_xphi(x, phi, &e), &mut adj_rhs);
        axpy(1.0, &lin.jac_lin_t(&e, &self.adjoint), &mut adj_rhs);
        let big_y = lin.solve_jac_t(&adj_rhs);

        axpy(1.0, &q.hess_phix(x, phi, &big_x), &mut direct);
        axpy(1.0, &lin.jac_grad(&big_x, &self.adjoint), &mut direct);
        axpy(-1.0, &lin.r_phi_t(&big_y), &mut direct);

        (0..np)
            .map(|i| {
                s1[i] * direct[i] + second[i] + s3[i] * self.grad_phi[i] * w2[i] + s2[i] * self.grad_phi[i] * z[i]
            })
            .collect()
    }

    /// `⟨w, H_m w⟩` — convenience for verification.
    pub fn hess_quadratic(&self, w: &[f64]) -> f64 {
        dot(w, &self.hess_action(w))
    }
}
