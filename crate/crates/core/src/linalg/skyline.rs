//! Envelope (skyline) Cholesky factorization for sparse SPD matrices.
//!
//! Row `i` of the factor is stored densely from its first structurally
//! nonzero column up to the diagonal. Fill-in never leaves the envelope, so
//! the storage is fixed by the pattern of the input.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    vals: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors `a = L Lᵀ`. Only the lower triangle of `a` is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("cholesky of non-square {}x{}", n, a.ncols())));
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            *f = a.row(i).map(|(j, _)| j).filter(|&j| j <= i).min().unwrap_or(i);
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut vals = vec![0.0; offset[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    vals[offset[i] + j - first[i]] = v;
                }
            }
        }
        let diag_scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_j = offset[j];
                let mut s = vals[row_i + j - fi];
                let li = &vals[row_i + lo - fi..row_i + j - fi];
                let lj = &vals[row_j + lo - fj..row_j + j - fj];
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                let djj = vals[row_j + j - fj];
                vals[row_i + j - fi] = s / djj;
            }
            let li = &vals[row_i..row_i + i - fi];
            let d = vals[row_i + i - fi] - li.iter().map(|x| x * x).sum::<f64>();
            if !(d > 1e-14 * diag_scale) || !d.is_finite() {
                return Err(Error::Solver(format!(
                    "non-positive pivot {d:.3e} at row {i} of {n} (diagonal scale {diag_scale:.3e})"
                )));
            }
            vals[row_i + i - fi] = d.sqrt();
        }
        Ok(Self { n, first, offset, vals })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.offset[i]..self.offset[i + 1]]
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.row(i);
            let k = i - fi;
            let s: f64 = row[..k].iter().zip(&b[fi..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / row[k];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n);
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let k = i - fi;
            let xi = y[i] / row[k];
            y[i] = xi;
            for (l, yk) in row[..k].iter().zip(&mut y[fi..i]) {
                *yk -= l * xi;
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `L x`
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let fi = self.first[i];
                self.row(i).iter().zip(&x[fi..=i]).map(|(l, v)| l * v).sum()
            })
            .collect()
    }

    /// `log det A = 2 Σ log L_ii`
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.row(i)[i - self.first[i]].ln()).sum()
    }
}
