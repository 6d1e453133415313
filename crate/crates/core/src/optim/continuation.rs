//! Continuation in the smoothing sharpness ω and penalty weight γ around
//! repeated Newton–CG solves of the surrogate cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::lumped_mass;
use crate::linalg::dense::norm;

use super::cost::{CostBreakdown, CostEvaluator, FrozenBases};
use super::incg::{incg_solve, IncgOptions, IncgResult, IterRecord, Objective};

/// The surrogate cost as an [`Objective`]. Gradients near the last full
/// evaluation reuse its Ritz bases, so finite-difference Hessian products
/// differentiate one fixed smooth function.
pub struct CostObjective<'e, 'a> {
    ev: &'e CostEvaluator<'a>,
    frozen: Option<FrozenBases>,
    last: Option<CostBreakdown>,
    solves: usize,
}

impl<'e, 'a> CostObjective<'e, 'a> {
    pub fn new(ev: &'e CostEvaluator<'a>) -> Self {
        Self { ev, frozen: None, last: None, solves: 0 }
    }

    /// Breakdown at the last reference point.
    pub fn last(&self) -> Option<&CostBreakdown> {
        self.last.as_ref()
    }
}

impl Objective for CostObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.ev.model().n_params()
    }

    fn value_grad(&mut self, d: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.ev.evaluate(d, None, true)?;
        self.solves += e.solves;
        let g = e.gradient.ok_or_else(|| Error::Optimizer("gradient missing".into()))?;
        let c = e.breakdown.cost;
        self.frozen = Some(e.bases);
        self.last = Some(e.breakdown);
        Ok((c, g))
    }

    fn value(&mut self, d: &[f64]) -> Result<f64> {
        let e = self.ev.evaluate(d, None, false)?;
        self.solves += e.solves;
        Ok(e.breakdown.cost)
    }

    fn gradient_near(&mut self, d: &[f64]) -> Result<Vec<f64>> {
        let frozen = self.frozen.as_ref().ok_or_else(|| Error::Optimizer("no reference point".into()))?;
        let e = self.ev.evaluate(d, Some(frozen), true)?;
        self.solves += e.solves;
        e.gradient.ok_or_else(|| Error::Optimizer("gradient missing".into()))
    }

    fn monitor(&self) -> f64 {
        self.last.as_ref().map_or(f64::NAN, |b| b.chance)
    }

    fn solves(&self) -> usize {
        self.solves
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub omega0: f64,
    pub gamma0: f64,
    /// Growth factors applied after every outer step.
    pub omega_growth: f64,
    pub gamma_growth: f64,
    pub max_outer: usize,
    /// Stop once successive outer iterates differ by at most this (ℓ²).
    pub outer_tol: f64,
    /// Inner solver settings; its box is replaced by the cost's box.
    pub inner: IncgOptions,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            omega0: 4.0 / 22.5e6,
            gamma0: 10.0,
            omega_growth: 2.0,
            gamma_growth: 2.0,
            max_outer: 10,
            outer_tol: 1e-3,
            inner: IncgOptions::default(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega0 > 0.0
            && self.gamma0 >= 0.0
            && self.omega_growth > 1.0
            && self.gamma_growth > 1.0
            && self.max_outer >= 1
            && self.outer_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid continuation settings {self:?}")))
        }
    }
}

/// One inner iterate tagged with its outer step.
#[derive(Clone, Debug, Serialize)]
pub struct ProgressRecord {
    pub outer: usize,
    pub omega: f64,
    pub gamma: f64,
    #[serde(flatten)]
    pub inner: IterRecord,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterStep {
    pub outer: usize,
    pub omega: f64,
    pub gamma: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    /// `‖d_k − d_{k−1}‖`
    pub change: f64,
    pub breakdown: CostBreakdown,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeResult {
    pub design: Vec<f64>,
    pub steps: Vec<OuterStep>,
    pub solves: usize,
}

impl OptimizeResult {
    pub fn final_breakdown(&self) -> &CostBreakdown {
        &self.steps.last().expect("at least one outer step").breakdown
    }
}

/// Runs one Newton–CG solve at the evaluator's current `ω, γ`.
pub fn optimize_once(
    ev: &CostEvaluator<'_>,
    d0: &[f64],
    opts: &IncgOptions,
    on_iter: &mut dyn FnMut(&IterRecord),
) -> Result<(IncgResult, CostBreakdown, usize)> {
    let precond = lumped_mass(ev.model().parameter_mesh());
    // the design box belongs to the cost configuration
    let opts = IncgOptions { lower: ev.config().lower, upper: ev.config().upper, ..opts.clone() };
    let mut obj = CostObjective::new(ev);
    let res = incg_solve(&mut obj, d0, &precond, &opts, on_iter)?;
    // the last reference point is the returned iterate
    let bd = obj.last().cloned().ok_or_else(|| Error::Optimizer("no evaluation recorded".into()))?;
    Ok((res, bd, obj.solves()))
}

/// Alternates Newton–CG solves with geometric growth of `ω` and `γ`, warm
/// starting each solve from the previous design.
pub fn adaptive_optimize(
    ev: &mut CostEvaluator<'_>,
    d0: &[f64],
    cfg: &ContinuationConfig,
    on_iter: &mut dyn FnMut(&ProgressRecord),
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let (mut omega, mut gamma) = (cfg.omega0, cfg.gamma0);
    let mut d = d0.to_vec();
    let mut steps = Vec::new();
    let mut solves = 0;
    for outer in 1..=cfg.max_outer {
        ev.set_smoothing(omega, gamma);
        let (res, breakdown, s) = optimize_once(ev, &d, &cfg.inner, &mut |r| {
            on_iter(&ProgressRecord { outer, omega, gamma, inner: r.clone() })
        })?;
        solves += s;
        let change = norm(&res.d.iter().zip(&d).map(|(a, b)| a - b).collect::<Vec<_>>());
        log::info!(
            "outer {outer}: ω={omega:.3e} γ={gamma:.3e} cost={:.6e} chance={:.4} change={change:.3e}",
            breakdown.cost,
            breakdown.chance
        );
        steps.push(OuterStep {
            outer,
            omega,
            gamma,
            inner_iterations: res.iterations(),
            converged: res.converged,
            stalled: res.stalled,
            change,
            breakdown,
        });
        d = res.d;
        if outer > 1 && change <= cfg.outer_tol {
            break;
        }
        omega *= cfg.omega_growth;
        gamma *= cfg.gamma_growth;
    }
    Ok(OptimizeResult { design: d, steps, solves })
}
