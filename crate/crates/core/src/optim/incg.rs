//! Bound-projected inexact Newton–CG with Armijo backtracking.
//!
//! Hessian-vector products are forward differences of the gradient; the
//! objective decides what it holds fixed between the two gradients (e.g. a
//! Ritz basis), so the difference quotient sees one smooth function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense::{dot, norm};

pub trait Objective {
    fn dim(&self) -> usize;
    /// Value and gradient at `d`; becomes the reference point for
    /// [`Objective::gradient_near`].
    fn value_grad(&mut self, d: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn value(&mut self, d: &[f64]) -> Result<f64>;
    /// Gradient at `d` close to the last reference point.
    fn gradient_near(&mut self, d: &[f64]) -> Result<Vec<f64>>;
    /// Scalar recorded alongside each iterate (e.g. a chance estimate).
    fn monitor(&self) -> f64 {
        f64::NAN
    }
    /// PDE solves spent so far.
    fn solves(&self) -> usize {
        0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncgOptions {
    /// Stop when `‖P g‖ ≤ rel_tol ‖P g₀‖`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub armijo: f64,
    pub max_cg: usize,
    pub lower: f64,
    pub upper: f64,
    /// Declares convergence when the full-step predicted decrease falls
    /// below this fraction of `|cost|`.
    pub roundoff: f64,
}

impl Default for IncgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 0.0,
            max_iter: 200,
            max_backtracks: 30,
            armijo: 1e-4,
            max_cg: 50,
            lower: 0.0,
            upper: 1.0,
            roundoff: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub cg_iters: usize,
    pub monitor: f64,
    pub solves: usize,
}

#[derive(Clone, Debug)]
pub struct IncgResult {
    pub d: Vec<f64>,
    pub cost: f64,
    pub history: Vec<IterRecord>,
    pub converged: bool,
    /// Line search exhausted its halvings.
    pub stalled: bool,
}

impl IncgResult {
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

fn project(d: &mut [f64], lo: f64, hi: f64) {
    d.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Indices pinned at a bound with the gradient pushing outward.
fn active_mask(d: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<bool> {
    let tol = 1e-12 * (hi - lo);
    d.iter().zip(g).map(|(&x, &gi)| (x <= lo + tol && gi > 0.0) || (x >= hi - tol && gi < 0.0)).collect()
}

fn masked(v: &[f64], active: &[bool]) -> Vec<f64> {
    v.iter().zip(active).map(|(&x, &a)| if a { 0.0 } else { x }).collect()
}

/// Preconditioned CG on the free variables with Eisenstat–Walker forcing.
/// `precond` is a diagonal approximation of the Hessian.
fn newton_direction(
    obj: &mut dyn Objective,
    d: &[f64],
    g: &[f64],
    active: &[bool],
    precond: &[f64],
    forcing: f64,
    max_cg: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = d.len();
    let rhs: Vec<f64> = masked(g, active).iter().map(|v| -v).collect();
    let rhs_norm = norm(&rhs);
    let mut p = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok((p, 0));
    }
    let h = (f64::EPSILON.sqrt() * (1.0 + norm(d))).max(1e-10);
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(a, b)| a / b).collect();
    let mut s = z.clone();
    let mut rz = dot(&r, &z);
    let mut iters = 0;
    while iters < max_cg {
        let sn = norm(&s);
        let eps = h / sn;
        let dp: Vec<f64> = d.iter().zip(&s).map(|(a, b)| a + eps * b).collect();
        let gp = obj.gradient_near(&dp)?;
        let hs = masked(&gp.iter().zip(g).map(|(a, b)| (a - b) / eps).collect::<Vec<_>>(), active);
        let curv = dot(&s, &hs);
        iters += 1;
        if curv <= 0.0 {
            if iters == 1 {
                // no curvature information: preconditioned steepest descent
                p = s.clone();
            }
            break;
        }
        let alpha = rz / curv;
        for i in 0..n {
            p[i] += alpha * s[i];
            r[i] -= alpha * hs[i];
        }
        if norm(&r) <= forcing * rhs_norm {
            break;
        }
        z = r.iter().zip(precond).map(|(a, b)| a / b).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            s[i] = z[i] + beta * s[i];
        }
    }
    Ok((p, iters))
}

/// Minimizes `obj` over the box `[lower, upper]ⁿ` from `d0`; `on_iter` sees
/// every accepted iterate (and the start).
pub fn incg_solve(
    obj: &mut dyn Objective,
    d0: &[f64],
    precond: &[f64],
    opts: &IncgOptions,
    on_iter: &mut dyn FnMut(&IterRecord),
) -> Result<IncgResult> {
    if d0.len() != obj.dim() || precond.len() != obj.dim() {
        return Err(Error::Shape(format!("start {} / preconditioner {} for dimension {}", d0.len(), precond.len(), obj.dim())));
    }
    if precond.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Optimizer("preconditioner must be positive".into()));
    }
    let (lo, hi) = (opts.lower, opts.upper);
    let mut d = d0.to_vec();
    project(&mut d, lo, hi);
    let (mut cost, mut g) = obj.value_grad(&d)?;
    let mut active = active_mask(&d, &g, lo, hi);
    let mut gnorm = norm(&masked(&g, &active));
    let g0 = gnorm;
    let mut history = vec![IterRecord {
        iter: 0,
        cost,
        grad_norm: gnorm,
        step: 0.0,
        cg_iters: 0,
        monitor: obj.monitor(),
        solves: obj.solves(),
    }];
    on_iter(&history[0]);
    let mut converged = gnorm <= opts.abs_tol || g0 == 0.0;
    let mut stalled = false;
    let mut it = 0;
    while !converged && it < opts.max_iter {
        it += 1;
        let forcing = (gnorm / g0).sqrt().min(0.5);
        let (mut p, cg_iters) = newton_direction(obj, &d, &g, &active, precond, forcing, opts.max_cg)?;
        if dot(&p, &g) >= 0.0 {
            p = masked(&g, &active).iter().zip(precond).map(|(a, b)| -a / b).collect();
        }
        let mut full = d.clone();
        full.iter_mut().zip(&p).for_each(|(x, pi)| *x = (*x + pi).clamp(lo, hi));
        let predicted: f64 = g.iter().zip(full.iter().zip(&d)).map(|(gi, (a, b))| gi * (a - b)).sum();
        if predicted.abs() <= opts.roundoff * cost.abs().max(1.0) {
            // stationary to working precision: no decrease is measurable
            log::debug!("predicted decrease {predicted:.3e} below working precision");
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial: Vec<f64> = d.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            project(&mut trial, lo, hi);
            let delta: Vec<f64> = trial.iter().zip(&d).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &delta);
            if decrease < 0.0 {
                let c = obj.value(&trial)?;
                if c <= cost + opts.armijo * decrease {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            log::warn!("line search failed after {} halvings", opts.max_backtracks);
            stalled = true;
            break;
        };
        d = next;
        let (c, gn) = obj.value_grad(&d)?;
        cost = c;
        g = gn;
        active = active_mask(&d, &g, lo, hi);
        gnorm = norm(&masked(&g, &active));
        let rec = IterRecord { iter: it, cost, grad_norm: gnorm, step, cg_iters, monitor: obj.monitor(), solves: obj.solves() };
        on_iter(&rec);
        history.push(rec);
        converged = gnorm <= opts.rel_tol * g0 || gnorm <= opts.abs_tol;
    }
    // `d` is the last accepted iterate and also the best under Armijo
    Ok(IncgResult { d, cost, history, converged, stalled })
}
