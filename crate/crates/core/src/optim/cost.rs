//! Quadratic-surrogate cost `J_QUAD` with a penalized chance term, and its
//! design gradient.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::stiffness_matrix;
use crate::field::MaternField;
use crate::forward::{ChanceConfig, ChanceFunction, ForwardModel, Qoi, ThermalCompliance};
use crate::linalg::dense::{axpy, dot, pairwise_sum};
use crate::linalg::CsrMatrix;
use crate::par;
use crate::risk::{
    double_pass, indicator, logistic, logistic_slope, rayleigh_ritz, Covariance, EigOptions, EigenResult, SampleSet,
};
use crate::sensitivity::{CurvatureTerm, IncrementalPair, LinearizationPoint, QoiPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Variance weight.
    pub beta_v: f64,
    /// Weight of `R(d) = ½∫|∇d|²`.
    pub beta_r: f64,
    pub chance: ChanceConfig,
    /// Penalty parameter of `S_γ(x) = γ/2 max(0, x)²`.
    pub penalty: f64,
    /// Logistic smoothing of the indicator (1/Pa for the stress constraint).
    pub omega: f64,
    pub eig_q: EigOptions,
    pub eig_f: EigOptions,
    /// Frozen samples for the surrogate chance estimate.
    pub chance_samples: usize,
    pub chance_seed: u64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            beta_v: 0.1,
            beta_r: 1e-5,
            chance: ChanceConfig::default(),
            penalty: 10.0,
            omega: 4.0 / ChanceConfig::default().t_cr,
            eig_q: EigOptions::default(),
            eig_f: EigOptions::default(),
            chance_samples: 1000,
            chance_seed: 7,
            lower: 0.0,
            upper: 1.0,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        self.chance.validate()?;
        self.eig_q.validate()?;
        self.eig_f.validate()?;
        if !(self.beta_v >= 0.0 && self.beta_r >= 0.0) {
            return Err(Error::Param("beta_v and beta_r must be non-negative".into()));
        }
        if !(self.penalty > 0.0 && self.omega > 0.0) {
            return Err(Error::Param("penalty and omega must be positive".into()));
        }
        if !(self.lower < self.upper) {
            return Err(Error::Param(format!("empty design box [{}, {}]", self.lower, self.upper)));
        }
        Ok(())
    }
}

/// `S_γ(x) = γ/2 max(0, x)²`
pub fn quadratic_penalty(gamma: f64, x: f64) -> f64 {
    0.5 * gamma * x.max(0.0).powi(2)
}

/// Ritz bases to reuse instead of fresh sketches.
#[derive(Clone, Debug)]
pub struct FrozenBases {
    pub q: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CostBreakdown {
    pub cost: f64,
    pub q_bar: f64,
    /// Taylor mean and variance of `Q`.
    pub mean_q: f64,
    pub var_q: f64,
    pub regularization: f64,
    pub f_bar: f64,
    /// `E[l_ω(f_QUAD)]` over the frozen samples.
    pub chance_smoothed: f64,
    /// Indicator version of the same estimate.
    pub chance: f64,
    pub penalty: f64,
    pub eig_q: Vec<f64>,
    pub eig_f: Vec<f64>,
}

pub struct Evaluation {
    pub breakdown: CostBreakdown,
    pub gradient: Option<Vec<f64>>,
    pub bases: FrozenBases,
    /// PDE solves spent on this evaluation.
    pub solves: usize,
}

/// Evaluates `J_QUAD` and its gradient for one model, prior and sample set.
pub struct CostEvaluator<'a> {
    model: &'a ForwardModel,
    field: &'a MaternField,
    q: ThermalCompliance<'a>,
    f: ChanceFunction<'a>,
    cfg: CostConfig,
    samples: SampleSet,
    stiffness: CsrMatrix,
}

struct QoiSpectral<'p, 'a> {
    point: QoiPoint<'p, 'a>,
    eig: EigenResult<IncrementalPair>,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(model: &'a ForwardModel, field: &'a MaternField, cfg: CostConfig) -> Result<Self> {
        cfg.validate()?;
        if field.dim() != model.n_params() {
            return Err(Error::Shape(format!("field has {} dofs, model {} parameters", field.dim(), model.n_params())));
        }
        let samples = SampleSet::draw(field, cfg.chance_samples, cfg.chance_seed);
        let stiffness = stiffness_matrix(model.parameter_mesh());
        Ok(Self {
            model,
            field,
            q: ThermalCompliance::new(model),
            f: ChanceFunction::new(model, cfg.chance.clone()),
            cfg,
            samples,
            stiffness,
        })
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    pub fn model(&self) -> &'a ForwardModel {
        self.model
    }

    pub fn field(&self) -> &'a MaternField {
        self.field
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    /// Continuation hook.
    pub fn set_smoothing(&mut self, omega: f64, penalty: f64) {
        self.cfg.omega = omega;
        self.cfg.penalty = penalty;
    }

    /// `R(d) = ½ dᵀ K d`
    pub fn regularization(&self, d: &[f64]) -> f64 {
        0.5 * dot(d, &self.stiffness.mul_vec(d))
    }

    /// Solves for the analytic count: state, two adjoints, one or two
    /// Hessian passes per QoI (two solves per action), and two aggregated
    /// solves per QoI for the gradient (the chance part only while the
    /// penalty is active).
    pub fn expected_solves(k_q: usize, k_f: usize, frozen: bool, gradient: bool, penalty_active: bool) -> usize {
        let passes = if frozen { 1 } else { 2 };
        let grad = match (gradient, penalty_active) {
            (false, _) => 0,
            (true, false) => 2,
            (true, true) => 4,
        };
        3 + 2 * passes * (k_q + k_f) + grad
    }

    fn spectral<'p>(
        &self,
        point: QoiPoint<'p, 'a>,
        opts: &EigOptions,
        frozen: Option<&[Vec<f64>]>,
    ) -> Result<QoiSpectral<'p, 'a>> {
        let eig = match frozen {
            Some(b) => rayleigh_ritz(&point, self.field, b.to_vec(), opts.n_eig)?,
            None => double_pass(&point, self.field, opts)?,
        };
        Ok(QoiSpectral { point, eig })
    }

    pub fn evaluate(&self, d: &[f64], frozen: Option<&FrozenBases>, want_grad: bool) -> Result<Evaluation> {
        let n = self.model.n_params();
        if d.len() != n {
            return Err(Error::Shape(format!("design of length {} for {n} parameters", d.len())));
        }
        let before = self.model.counter().total_pde_solves();
        let mean = self.field.mean();
        let lp = LinearizationPoint::new(self.model, d, mean)?;
        let sq = self.spectral(lp.qoi(&self.q as &dyn Qoi), &self.cfg.eig_q, frozen.map(|f| f.q.as_slice()))?;
        let sf = self.spectral(lp.qoi(&self.f as &dyn Qoi), &self.cfg.eig_f, frozen.map(|f| f.f.as_slice()))?;
        let cfg = &self.cfg;

        // Q moments
        let q_bar = sq.point.value();
        let gq = sq.point.grad_m().to_vec();
        let cgq = self.field.cov(&gq);
        let tr: f64 = sq.eig.values.iter().sum();
        let tr2: f64 = sq.eig.values.iter().map(|l| l * l).sum();
        let mean_q = q_bar + 0.5 * tr;
        let var_q = dot(&gq, &cgq) + 0.5 * tr2;
        let reg = self.regularization(d);

        // surrogate chance on frozen samples: f_i = f̄ + ⟨ḡ, z_i⟩ + ½ Σ_S λ_j (u_jᵀ a_i)²
        let f_bar = sf.point.value();
        let gf = sf.point.grad_m();
        let k = sf.eig.basis.len();
        let kept = sf.eig.values.len();
        let proj: Vec<Vec<f64>> = par::map_range(self.samples.len(), |i| {
            sf.eig.basis.iter().map(|v| dot(v, &self.samples.precision[i])).collect()
        });
        let rot = &sf.eig.rotation;
        let f_vals: Vec<f64> = par::map_range(self.samples.len(), |i| {
            let a = &proj[i];
            let mut quad = 0.0;
            for j in 0..kept {
                let c: f64 = (0..k).map(|r| rot[(r, j)] * a[r]).sum();
                quad += sf.eig.values[j] * c * c;
            }
            f_bar + dot(gf, &self.samples.fluctuations[i]) + 0.5 * quad
        });
        let m = f_vals.len().max(1) as f64;
        let smoothed: Vec<f64> = f_vals.iter().map(|&v| logistic(cfg.omega, v)).collect();
        let p_smooth = pairwise_sum(&smoothed) / m;
        let p_ind = pairwise_sum(&f_vals.iter().map(|&v| indicator(v)).collect::<Vec<_>>()) / m;
        let excess = p_smooth - cfg.chance.alpha_c;
        let pen = quadratic_penalty(cfg.penalty, excess);

        let cost = mean_q + cfg.beta_v * var_q + cfg.beta_r * reg + pen;
        let breakdown = CostBreakdown {
            cost,
            q_bar,
            mean_q,
            var_q,
            regularization: reg,
            f_bar,
            chance_smoothed: p_smooth,
            chance: p_ind,
            penalty: pen,
            eig_q: sq.eig.values.clone(),
            eig_f: sf.eig.values.clone(),
        };

        let gradient = if want_grad {
            let mut g = gq.clone();
            // Q: trace terms weighted (½ + β_V λ_j), variance-of-gradient term 2β_V H(Cḡ)
            let terms_q: Vec<CurvatureTerm> = (0..sq.eig.values.len())
                .map(|j| {
                    let u: Vec<f64> = sq.eig.rotation.column(j).iter().copied().collect();
                    CurvatureTerm {
                        weight: 0.5 + cfg.beta_v * sq.eig.values[j],
                        dir: sq.eig.vectors[j].clone(),
                        pair: IncrementalPair::combine(&u, &sq.eig.records),
                    }
                })
                .collect();
            let zq: Vec<f64> = cgq.iter().map(|v| 2.0 * cfg.beta_v * v).collect();
            axpy(1.0, &sq.point.curvature_gradient(&terms_q, &zq), &mut g);

            // regularization
            axpy(cfg.beta_r, &self.stiffness.mul_vec(d), &mut g);

            // chance penalty: S'(P − α) (1/M) Σ l'(f_i) ∇f_i
            let outer = cfg.penalty * excess.max(0.0);
            if outer > 0.0 {
                let w: Vec<f64> = f_vals.iter().map(|&v| outer * logistic_slope(cfg.omega, v) / m).collect();
                let wsum = pairwise_sum(&w);
                axpy(wsum, gf, &mut g);
                let mut zf = vec![0.0; n];
                for (wi, z) in w.iter().zip(&self.samples.fluctuations) {
                    axpy(*wi, z, &mut zf);
                }
                // weighted second moment of the projections, in Ritz coordinates
                let mut gmat = DMatrix::zeros(k, k);
                for (wi, a) in w.iter().zip(&proj) {
                    for r in 0..k {
                        for c in 0..k {
                            gmat[(r, c)] += wi * a[r] * a[c];
                        }
                    }
                }
                let terms_f = truncation_terms(&sf.eig, &gmat);
                axpy(1.0, &sf.point.curvature_gradient(&terms_f, &zf), &mut g);
            }
            Some(g)
        } else {
            None
        };

        let bases = FrozenBases { q: sq.eig.basis.clone(), f: sf.eig.basis.clone() };
        let solves = self.model.counter().total_pde_solves() - before;
        Ok(Evaluation { breakdown, gradient, bases, solves })
    }
}

/// Curvature terms for `½ tr(G · D F_S(H_V))`, where `F_S` keeps the Ritz
/// pairs in `S` (derivative of a spectral truncation via divided
/// differences).
fn truncation_terms(eig: &EigenResult<IncrementalPair>, g: &DMatrix<f64>) -> Vec<CurvatureTerm> {
    let k = eig.basis.len();
    let kept = eig.values.len();
    let u = &eig.rotation;
    let lam = &eig.ritz_values;
    let gh = u.transpose() * g * u;
    let scale = lam.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let b = DMatrix::from_fn(k, k, |a, c| {
        let (ia, ic) = (a < kept, c < kept);
        let gamma = match (ia, ic) {
            (true, true) => 1.0,
            (false, false) => 0.0,
            _ => {
                let fa = if ia { lam[a] } else { 0.0 };
                let fc = if ic { lam[c] } else { 0.0 };
                let diff = lam[a] - lam[c];
                if diff.abs() <= 1e-14 * scale {
                    0.5
                } else {
                    (fa - fc) / diff
                }
            }
        };
        0.5 * gamma * gh[(a, c)]
    });
    let b = (&b + b.transpose()) * 0.5;
    let se = SymmetricEigen::new(b);
    (0..k)
        .filter(|&l| se.eigenvalues[l] != 0.0)
        .map(|l| {
            let coeff: Vec<f64> = (u * se.eigenvectors.column(l)).iter().copied().collect();
            let mut dir = vec![0.0; eig.basis[0].len()];
            for (c, v) in coeff.iter().zip(&eig.basis) {
                axpy(*c, v, &mut dir);
            }
            CurvatureTerm { weight: se.eigenvalues[l], dir, pair: IncrementalPair::combine(&coeff, &eig.records) }
        })
        .collect()
}
