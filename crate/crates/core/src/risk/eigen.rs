//! Double-pass randomized solver for `H ψ = λ C⁻¹ ψ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MaternField;
use crate::linalg::dense::{axpy, dot};
use crate::par;
use crate::sensitivity::{IncrementalPair, QoiPoint};

/// Prior covariance `C` together with its inverse.
pub trait Covariance: Sync {
    fn dim(&self) -> usize;
    fn cov(&self, v: &[f64]) -> Vec<f64>;
    fn prec(&self, v: &[f64]) -> Vec<f64>;
}

impl Covariance for MaternField {
    fn dim(&self) -> usize {
        MaternField::dim(self)
    }
    fn cov(&self, v: &[f64]) -> Vec<f64> {
        self.apply_covariance(v).expect("covariance input length")
    }
    fn prec(&self, v: &[f64]) -> Vec<f64> {
        self.apply_precision(v).expect("precision input length")
    }
}

/// Diagonal covariance, mainly for synthetic checks.
#[derive(Clone, Debug)]
pub struct DiagonalCovariance(pub Vec<f64>);

impl Covariance for DiagonalCovariance {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn cov(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.0).map(|(a, c)| a * c).collect()
    }
    fn prec(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.0).map(|(a, c)| a / c).collect()
    }
}

/// Symmetric Hessian action; each application may return a by-product
/// (e.g. incremental solutions) for reuse in later derivatives.
pub trait HessianOp: Sync {
    type Record: Send;
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> (Vec<f64>, Self::Record);
}

/// Explicit symmetric matrix.
#[derive(Clone, Debug)]
pub struct DenseHessian(pub DMatrix<f64>);

impl HessianOp for DenseHessian {
    type Record = ();
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64]) -> (Vec<f64>, ()) {
        let y = &self.0 * nalgebra::DVector::from_column_slice(x);
        (y.as_slice().to_vec(), ())
    }
}

impl HessianOp for QoiPoint<'_, '_> {
    type Record = IncrementalPair;
    fn dim(&self) -> usize {
        self.grad_m().len()
    }
    fn apply(&self, x: &[f64]) -> (Vec<f64>, IncrementalPair) {
        self.hess_action_full(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigOptions {
    pub n_eig: usize,
    pub oversampling: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { n_eig: 25, oversampling: 10, seed: 0 }
    }
}

impl EigOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_eig == 0 {
            return Err(Error::Param("n_eig must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sketch_width(&self) -> usize {
        self.n_eig + self.oversampling
    }
}

/// Ritz pairs of `H` on a `C⁻¹`-orthonormal basis.
#[derive(Clone, Debug)]
pub struct EigenResult<R> {
    /// Kept eigenvalues, descending by magnitude.
    pub values: Vec<f64>,
    /// `ψ_j = Q u_j`, `C⁻¹`-orthonormal.
    pub vectors: Vec<Vec<f64>>,
    /// The basis `Q` the pairs were extracted from.
    pub basis: Vec<Vec<f64>>,
    /// Hessian by-products for each basis column.
    pub records: Vec<R>,
    /// All Ritz values and vectors (columns of `U`) of the projected matrix,
    /// sorted like `values`.
    pub ritz_values: Vec<f64>,
    pub rotation: DMatrix<f64>,
    /// `max |ψᵢᵀ C⁻¹ ψⱼ − δᵢⱼ|`
    pub orthonormality: f64,
}

impl<R> EigenResult<R> {
    pub fn n_kept(&self) -> usize {
        self.values.len()
    }
}

fn gaussian_sketch(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

/// `C⁻¹`-orthonormalizes the columns of `y` by twice-repeated Gram–Schmidt,
/// dropping numerically dependent columns.
pub fn prec_orthonormalize(y: Vec<Vec<f64>>, cov: &dyn Covariance) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    let mut bq: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    for mut col in y {
        let mut b = cov.prec(&col);
        let initial = dot(&col, &b).max(0.0).sqrt();
        if initial == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (qi, bi) in q.iter().zip(&bq) {
                let r = dot(bi, &col);
                axpy(-r, qi, &mut col);
                axpy(-r, bi, &mut b);
            }
        }
        // recompute to avoid drift in the cached C⁻¹ image
        b = cov.prec(&col);
        let nrm = dot(&col, &b).max(0.0).sqrt();
        if nrm <= 1e-10 * initial {
            log::warn!("sketch column numerically dependent; dropped");
            continue;
        }
        col.iter_mut().for_each(|v| *v /= nrm);
        b.iter_mut().for_each(|v| *v /= nrm);
        q.push(col);
        bq.push(b);
    }
    q
}

/// Projects `H` on `basis` and returns the `n_eig` Ritz pairs largest in
/// magnitude. Costs one Hessian action per basis column.
pub fn rayleigh_ritz<H: HessianOp>(
    op: &H,
    cov: &dyn Covariance,
    basis: Vec<Vec<f64>>,
    n_eig: usize,
) -> Result<EigenResult<H::Record>> {
    let k = basis.len();
    if k == 0 {
        return Err(Error::Eigen("empty basis".into()));
    }
    let applied = par::map_slice(&basis, |q| op.apply(q));
    let (hq, records): (Vec<Vec<f64>>, Vec<H::Record>) = applied.into_iter().unzip();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            t[(i, j)] = dot(&basis[i], &hq[j]);
        }
    }
    let t = (&t + t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let ritz_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let rotation = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let kept = n_eig.min(k);
    if kept < n_eig {
        log::warn!("only {kept} of {n_eig} eigenpairs available");
    }
    let n = op.dim();
    let vectors: Vec<Vec<f64>> = (0..kept)
        .map(|j| {
            let mut v = vec![0.0; n];
            for (i, q) in basis.iter().enumerate() {
                axpy(rotation[(i, j)], q, &mut v);
            }
            v
        })
        .collect();
    let prec_v = par::map_slice(&vectors, |v| cov.prec(v));
    let mut orth = 0.0f64;
    for i in 0..kept {
        for j in 0..kept {
            let target = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((dot(&vectors[i], &prec_v[j]) - target).abs());
        }
    }
    Ok(EigenResult {
        values: ritz_values[..kept].to_vec(),
        vectors,
        basis,
        records,
        ritz_values,
        rotation,
        orthonormality: orth,
    })
}

/// Sketch `Ω`, range `Y = C H Ω`, `C⁻¹`-orthonormal basis, then Rayleigh–Ritz.
/// Uses `2 (n_eig + oversampling)` Hessian actions.
pub fn double_pass<H: HessianOp>(op: &H, cov: &dyn Covariance, opts: &EigOptions) -> Result<EigenResult<H::Record>> {
    opts.validate()?;
    let n = op.dim();
    if cov.dim() != n {
        return Err(Error::Shape(format!("Hessian has dimension {n}, covariance {}", cov.dim())));
    }
    let k = opts.sketch_width().min(n);
    let omega = gaussian_sketch(n, k, opts.seed);
    let y = par::map_slice(&omega, |w| cov.cov(&op.apply(w).0));
    let basis = prec_orthonormalize(y, cov);
    rayleigh_ritz(op, cov, basis, opts.n_eig)
}
