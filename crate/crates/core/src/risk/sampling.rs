//! Plain and control-variate Monte Carlo moment estimators.

use super::taylor::TaylorModel;
use super::{Estimator, MomentEstimate};
use crate::error::{Error, Result};
use crate::field::MaternField;
use crate::linalg::dense::pairwise_sum;
use crate::par;

/// Frozen draws `m_i = m̄ + z_i` with the precision images `C⁻¹ z_i`, so that
/// surrogates can be evaluated without solves.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub mean: Vec<f64>,
    pub fluctuations: Vec<Vec<f64>>,
    pub precision: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SampleSet {
    /// Draw `count` samples; sample `i` uses stream `i` of `seed`.
    pub fn draw(field: &MaternField, count: usize, seed: u64) -> Self {
        let pairs = par::map_range(count, |i| {
            let xi = field.draw_noise(&mut MaternField::rng(seed, i as u64));
            (field.fluctuation(&xi), field.precision_of_fluctuation(&xi))
        });
        let (fluctuations, precision) = pairs.into_iter().unzip();
        Self { mean: field.mean().to_vec(), fluctuations, precision, seed }
    }

    pub fn len(&self) -> usize {
        self.fluctuations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fluctuations.is_empty()
    }

    /// First `count` samples (common random numbers across sizes).
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.len());
        Self {
            mean: self.mean.clone(),
            fluctuations: self.fluctuations[..count].to_vec(),
            precision: self.precision[..count].to_vec(),
            seed: self.seed,
        }
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.mean.iter().zip(&self.fluctuations[i]).map(|(m, z)| m + z).collect()
    }

    /// Evaluates `f(m_i)` for every sample in parallel.
    pub fn evaluate<F>(&self, f: F) -> Vec<Result<f64>>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync + Send,
    {
        par::map_range(self.len(), |i| f(&self.sample(i)))
    }

    /// Surrogate values on every sample.
    pub fn evaluate_quad(&self, model: &TaylorModel) -> Vec<f64> {
        par::map_range(self.len(), |i| model.eval_quad(&self.fluctuations[i], &self.precision[i]))
    }
}

fn collect_ok(values: &[Result<f64>]) -> (Vec<usize>, usize) {
    let ok: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_ok()).collect();
    let failed = values.len() - ok.len();
    if failed > 0 {
        log::warn!("{failed} of {} sample evaluations failed and were skipped", values.len());
    }
    (ok, failed)
}

fn value(r: &Result<f64>) -> f64 {
    *r.as_ref().expect("filtered to successful evaluations")
}

/// `E ≈ (1/M) Σ q_i`, `V ≈ (1/M) Σ q_i² − E²` (evaluated about the first
/// sample to avoid cancellation; algebraically identical).
pub fn mc_moments(values: &[Result<f64>]) -> Result<MomentEstimate> {
    let (ok, failures) = collect_ok(values);
    if ok.len() < 2 {
        return Err(Error::Domain(format!("{} successful samples; at least 2 needed", ok.len())));
    }
    let m = ok.len() as f64;
    let shift = value(&values[ok[0]]);
    let d: Vec<f64> = ok.iter().map(|&i| value(&values[i]) - shift).collect();
    let d_mean = pairwise_sum(&d) / m;
    let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
    let variance = (pairwise_sum(&sq) / m - d_mean * d_mean).max(0.0);
    Ok(MomentEstimate {
        mean: shift + d_mean,
        variance,
        stderr: Some((variance * m / (m - 1.0)).sqrt() / m.sqrt()),
        estimator: Estimator::Mc,
        samples: ok.len(),
        failures,
    })
}

/// Control-variate moments with the quadratic surrogate on the same samples.
/// The variance is not clamped and can come out negative for tiny `M`.
pub fn cv_moments(values: &[Result<f64>], model: &TaylorModel, samples: &SampleSet) -> Result<MomentEstimate> {
    if values.len() != samples.len() {
        return Err(Error::Shape(format!("{} values for {} samples", values.len(), samples.len())));
    }
    let (ok, failures) = collect_ok(values);
    if ok.is_empty() {
        return Err(Error::Domain("no successful samples".into()));
    }
    let m = ok.len() as f64;
    let qbar = model.value;
    let mut resid = Vec::with_capacity(ok.len());
    let mut sq_diff = Vec::with_capacity(ok.len());
    for &i in &ok {
        let (lin, quad) = model.parts(&samples.fluctuations[i], &samples.precision[i]);
        let dq = value(&values[i]) - qbar;
        resid.push(dq - lin - quad);
        sq_diff.push(dq * dq - (lin + quad).powi(2));
    }
    let half_tr = 0.5 * model.trace();
    let r_mean = pairwise_sum(&resid) / m;
    let mean = qbar + half_tr + r_mean;
    let quad_second = model.grad_variance() + half_tr * half_tr + 0.5 * model.trace_sq();
    let variance = quad_second + pairwise_sum(&sq_diff) / m - (half_tr + r_mean).powi(2);
    let r_var = if ok.len() > 1 {
        resid.iter().map(|r| (r - r_mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(MomentEstimate {
        mean,
        variance,
        stderr: Some((r_var / m).sqrt()),
        estimator: Estimator::Cv,
        samples: ok.len(),
        failures,
    })
}
