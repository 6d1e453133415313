//! Sample estimators of `P(f ≥ 0)`.

use serde::{Deserialize, Serialize};

use crate::forward::sigmoid;
use crate::linalg::dense::pairwise_sum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanceMode {
    Indicator,
    /// Logistic `1/(1 + e^{−2ωf})`.
    Smoothed(f64),
}

/// `l_ω(x) = 1/(1 + e^{−2ωx})`
pub fn logistic(omega: f64, x: f64) -> f64 {
    sigmoid(2.0 * omega * x)
}

/// `l_ω'(x) = 2ω l (1 − l)`
pub fn logistic_slope(omega: f64, x: f64) -> f64 {
    let l = logistic(omega, x);
    2.0 * omega * l * (1.0 - l)
}

pub fn indicator(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Sample average of the indicator (or its smoothing) of `values`.
pub fn chance_prob(values: &[f64], mode: ChanceMode) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mapped: Vec<f64> = match mode {
        ChanceMode::Indicator => values.iter().map(|&f| indicator(f)).collect(),
        ChanceMode::Smoothed(w) => values.iter().map(|&f| logistic(w, f)).collect(),
    };
    (pairwise_sum(&mapped) / values.len() as f64).clamp(0.0, 1.0)
}
