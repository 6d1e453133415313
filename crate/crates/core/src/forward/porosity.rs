//! Sigmoid map from design and random field to fluid volume fraction.

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `φ_f = sigmoid(d + m)` nodewise.
pub fn porosity_map(d: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    if d.len() != m.len() {
        return Err(Error::Shape(format!("design has {} values, parameter {}", d.len(), m.len())));
    }
    Ok(d.iter().zip(m).map(|(a, b)| sigmoid(a + b)).collect())
}

/// First three derivatives of the sigmoid at `d + m`, as `(s', s'', s''')`.
pub fn sigmoid_derivatives(d: &[f64], m: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut s1 = Vec::with_capacity(d.len());
    let mut s2 = Vec::with_capacity(d.len());
    let mut s3 = Vec::with_capacity(d.len());
    for (a, b) in d.iter().zip(m) {
        let s = sigmoid(a + b);
        let d1 = s * (1.0 - s);
        s1.push(d1);
        s2.push(d1 * (1.0 - 2.0 * s));
        s3.push(d1 * (1.0 - 6.0 * d1));
    }
    (s1, s2, s3)
}
