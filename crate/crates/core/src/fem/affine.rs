//! Operators that depend affinely on a nodal coefficient vector.
//!
//! With P1 coefficients and exact quadrature, every form in the model is
//! `K(φ) = K0 + Σ_k φ_k T_k`. Storing the `T_k` entries explicitly gives
//! the operator, its directional derivative and the gradient of
//! `yᵀ K(φ) x` with respect to `φ` from one data structure.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug)]
struct Term {
    k: u32,
    row: u32,
    col: u32,
    slot: u32,
    v: f64,
}

/// Collects constant and coefficient-weighted matrix entries.
#[derive(Clone, Debug)]
pub struct AffineMatrixBuilder {
    nrows: usize,
    ncols: usize,
    n_params: usize,
    base: TripletBuilder,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl AffineMatrixBuilder {
    pub fn new(nrows: usize, ncols: usize, n_params: usize) -> Self {
        Self { nrows, ncols, n_params, base: TripletBuilder::new(nrows, ncols), terms: Vec::new() }
    }

    pub fn add_const(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.base.push(i, j, v);
        }
    }

    /// Adds `φ_k * v` at `(i, j)`.
    pub fn add_param(&mut self, k: usize, i: usize, j: usize, v: f64) {
        debug_assert!(k < self.n_params);
        if v != 0.0 {
            self.terms.push((k, i, j, v));
        }
    }

    pub fn build(mut self) -> AffineMatrix {
        // merge duplicate (k, i, j) entries
        self.terms.sort_by_key(|t| (t.1, t.2, t.0));
        let mut merged: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match merged.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (t.0, t.1, t.2) => last.3 += t.3,
                _ => merged.push(t),
            }
        }
        for &(_, i, j, _) in &merged {
            self.base.push(i, j, 0.0);
        }
        let pattern = self.base.to_csr();
        let terms = merged
            .into_iter()
            .map(|(k, i, j, v)| Term { k: k as u32, row: i as u32, col: j as u32, slot: slot_of(&pattern, i, j) as u32, v })
            .collect();
        AffineMatrix { nrows: self.nrows, ncols: self.ncols, n_params: self.n_params, base: pattern, terms }
    }
}

fn slot_of(a: &CsrMatrix, i: usize, j: usize) -> usize {
    let start = a.indptr()[i];
    let cols = &a.indices()[start..a.indptr()[i + 1]];
    start + cols.binary_search(&j).expect("entry is in the pattern")
}

#[derive(Clone, Debug)]
pub struct AffineMatrix {
    nrows: usize,
    ncols: usize,
    n_params: usize,
    base: CsrMatrix,
    terms: Vec<Term>,
}

impl AffineMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    fn check(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.n_params {
            return Err(Error::Shape(format!("{} coefficients for {} parameters", phi.len(), self.n_params)));
        }
        Ok(())
    }

    /// `K(φ)`
    pub fn eval(&self, phi: &[f64]) -> Result<CsrMatrix> {
        self.check(phi)?;
        let mut out = self.base.clone();
        let data = out.data_mut();
        for t in &self.terms {
            data[t.slot as usize] += phi[t.k as usize] * t.v;
        }
        Ok(out)
    }

    /// `K_lin(φ̂) x = Σ_k φ̂_k T_k x`
    pub fn apply_lin(&self, dphi: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for t in &self.terms {
            y[t.row as usize] += dphi[t.k as usize] * t.v * x[t.col as usize];
        }
        y
    }

    /// `K_lin(φ̂)ᵀ y`
    pub fn apply_lin_t(&self, dphi: &[f64], y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols];
        for t in &self.terms {
            x[t.col as usize] += dphi[t.k as usize] * t.v * y[t.row as usize];
        }
        x
    }

    /// `∂/∂φ_k (yᵀ K(φ) x)` for every k.
    pub fn grad(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params];
        for t in &self.terms {
            g[t.k as usize] += y[t.row as usize] * t.v * x[t.col as usize];
        }
        g
    }

    /// `K(φ) x` without materializing the matrix.
    pub fn apply(&self, phi: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = self.base.mul_vec(x);
        for t in &self.terms {
            y[t.row as usize] += phi[t.k as usize] * t.v * x[t.col as usize];
        }
        y
    }

    /// Keeps the listed rows and columns (in that order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> AffineMatrix {
        let rmap = index_map(self.nrows, rows);
        let cmap = index_map(self.ncols, cols);
        let mut b = AffineMatrixBuilder::new(rows.len(), cols.len(), self.n_params);
        for (ni, &i) in rows.iter().enumerate() {
            let span = self.base.indptr()[i]..self.base.indptr()[i + 1];
            for s in span {
                let j = self.base.indices()[s];
                if cmap[j] != usize::MAX {
                    b.base.push(ni, cmap[j], self.base.data()[s]);
                }
            }
        }
        for t in &self.terms {
            let (i, j) = (rmap[t.row as usize], cmap[t.col as usize]);
            if i != usize::MAX && j != usize::MAX {
                b.add_param(t.k as usize, i, j, t.v);
            }
        }
        b.build()
    }

    /// The affine vector `K(φ)[rows, cols] x_cols` for fixed `x`.
    pub fn times_fixed(&self, rows: &[usize], cols: &[usize], x: &[f64]) -> AffineVector {
        let rmap = index_map(self.nrows, rows);
        let mut xfull = vec![0.0; self.ncols];
        let mut cmask = vec![false; self.ncols];
        for (&j, &v) in cols.iter().zip(x) {
            xfull[j] = v;
            cmask[j] = true;
        }
        let mut base = vec![0.0; rows.len()];
        for (ni, &i) in rows.iter().enumerate() {
            let span = self.base.indptr()[i]..self.base.indptr()[i + 1];
            for s in span {
                let j = self.base.indices()[s];
                if cmask[j] {
                    base[ni] += self.base.data()[s] * xfull[j];
                }
            }
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            let (i, j) = (rmap[t.row as usize], t.col as usize);
            if i != usize::MAX && cmask[j] && xfull[j] != 0.0 {
                terms.push((t.k as usize, i, t.v * xfull[j]));
            }
        }
        AffineVector::from_parts(base, terms, self.n_params)
    }
}

fn index_map(n: usize, keep: &[usize]) -> Vec<usize> {
    let mut map = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        map[old] = new;
    }
    map
}

/// `b(φ) = b0 + Σ_k φ_k t_k`.
#[derive(Clone, Debug)]
pub struct AffineVector {
    base: Vec<f64>,
    terms: Vec<(u32, u32, f64)>,
    n_params: usize,
}

impl AffineVector {
    pub fn zeros(n: usize, n_params: usize) -> Self {
        Self { base: vec![0.0; n], terms: vec![], n_params }
    }

    pub fn from_parts(base: Vec<f64>, terms: Vec<(usize, usize, f64)>, n_params: usize) -> Self {
        let terms = terms.into_iter().filter(|t| t.2 != 0.0).map(|(k, i, v)| (k as u32, i as u32, v)).collect();
        Self { base, terms, n_params }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn add_const(&mut self, i: usize, v: f64) {
        self.base[i] += v;
    }

    pub fn add_param(&mut self, k: usize, i: usize, v: f64) {
        if v != 0.0 {
            self.terms.push((k as u32, i as u32, v));
        }
    }

    pub fn eval(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = self.base.clone();
        for &(k, i, v) in &self.terms {
            out[i as usize] += phi[k as usize] * v;
        }
        out
    }

    /// `B φ̂`
    pub fn apply_lin(&self, dphi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.base.len()];
        for &(k, i, v) in &self.terms {
            out[i as usize] += dphi[k as usize] * v;
        }
        out
    }

    /// `Bᵀ y = ∂/∂φ (yᵀ b(φ))`
    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params];
        for &(k, i, v) in &self.terms {
            g[k as usize] += y[i as usize] * v;
        }
        g
    }

    /// `self - other`
    pub fn sub(&self, other: &AffineVector) -> AffineVector {
        let base = self.base.iter().zip(&other.base).map(|(a, b)| a - b).collect();
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|&(k, i, v)| (k, i, -v)));
        Self { base, terms, n_params: self.n_params }
    }

    pub fn restrict(&self, rows: &[usize]) -> AffineVector {
        let rmap = index_map(self.base.len(), rows);
        let base = rows.iter().map(|&i| self.base[i]).collect();
        let terms = self
            .terms
            .iter()
            .filter(|t| rmap[t.1 as usize] != usize::MAX)
            .map(|&(k, i, v)| (k, rmap[i as usize] as u32, v))
            .collect();
        Self { base, terms, n_params: self.n_params }
    }
}
