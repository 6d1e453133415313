//! `verify-gradient`: finite-difference checks of the adjoint machinery at
//! the configured problem.

use chance_design::forward::{ChanceFunction, ForwardModel, Qoi, ThermalCompliance};
use chance_design::linalg::dense::dot;
use chance_design::optim::CostEvaluator;
use chance_design::sensitivity::LinearizationPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Stage};
use crate::run::RunDir;

const STEPS: [f64; 9] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6];
const DIRECTIONS: usize = 3;

#[derive(Serialize)]
struct Check {
    name: String,
    error: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Report {
    pass: bool,
    fault_injected: bool,
    checks: Vec<Check>,
}

/// Smallest relative central-difference error over a ladder of steps.
fn best_fd(f: impl Fn(f64) -> CliResult<f64>, exact: f64) -> CliResult<f64> {
    let mut best = f64::INFINITY;
    for e in STEPS {
        let fd = (f(e)? - f(-e)?) / (2.0 * e);
        best = best.min((fd - exact).abs() / exact.abs().max(1e-300));
    }
    Ok(best)
}

fn shifted(a: &[f64], b: &[f64], e: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + e * y).collect()
}

fn direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn qoi_at(model: &ForwardModel, qoi: &dyn Qoi, d: &[f64], m: &[f64]) -> CliResult<f64> {
    Ok(LinearizationPoint::new(model, d, m).stage("linearization")?.qoi(qoi).value())
}

/// Returns the solve count and whether every check passed. `fault` flips the
/// sign of every analytic gradient, which the checks must catch.
pub fn verify(cfg: &RunConfig, run: &mut RunDir, fault: bool) -> CliResult<(usize, bool)> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let n = model.n_params();
    let sign = if fault { -1.0 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let design = vec![cfg.design; n];
    let mean = field.mean().to_vec();
    let mut checks = Vec::new();
    let mut record = |name: String, error: f64, tolerance: f64| {
        log::info!("{name}: {error:.2e} (tolerance {tolerance:.0e})");
        checks.push(Check { name, error, tolerance, pass: error <= tolerance });
    };

    let q = ThermalCompliance::new(&model);
    let f = ChanceFunction::new(&model, cfg.cost.chance.clone());
    let lp = LinearizationPoint::new(&model, &design, &mean).stage("linearization")?;
    for (label, qoi) in [("compliance", &q as &dyn Qoi), ("chance function", &f)] {
        let qp = lp.qoi(qoi);
        let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
        for _ in 0..DIRECTIONS {
            let eta = direction(&mut rng, n);
            let exact = sign * dot(&eta, qp.grad_m());
            grad_err = grad_err.max(best_fd(|e| qoi_at(&model, qoi, &design, &shifted(&mean, &eta, e)), exact)?);
            let b = direction(&mut rng, n);
            let exact = sign * dot(&b, &qp.hess_action(&eta));
            hess_err = hess_err.max(best_fd(
                |e| {
                    let lq = LinearizationPoint::new(&model, &design, &shifted(&mean, &eta, e)).stage("linearization")?;
                    Ok(dot(&b, lq.qoi(qoi).grad_m()))
                },
                exact,
            )?);
        }
        record(format!("{label} parameter gradient"), grad_err, 1e-5);
        record(format!("{label} Hessian action"), hess_err, 1e-4);
    }

    let ev = CostEvaluator::new(&model, &field, cfg.cost.clone()).stage("cost setup")?;
    let e = ev.evaluate(&design, None, true).stage("cost evaluation")?;
    let g = e.gradient.clone().ok_or_else(|| CliError::Verification("cost gradient missing".into()))?;
    let mut err = 0.0f64;
    for _ in 0..DIRECTIONS {
        let eta = direction(&mut rng, n);
        let exact = sign * dot(&eta, &g);
        err = err.max(best_fd(
            |s| Ok(ev.evaluate(&shifted(&design, &eta, s), Some(&e.bases), false).stage("cost evaluation")?.breakdown.cost),
            exact,
        )?);
    }
    record("design gradient".into(), err, 1e-4);

    let pass = checks.iter().all(|c| c.pass);
    run.write_json("report.json", &Report { pass, fault_injected: fault, checks })?;
    Ok((model.counter().total_pde_solves(), pass))
}
