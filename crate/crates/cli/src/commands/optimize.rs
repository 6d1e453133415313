//! `optimize`: continuation over the smoothing and penalty parameters.

use chance_design::fem::VtkWriter;
use chance_design::forward::porosity_map;
use chance_design::optim::{adaptive_optimize, CostEvaluator, OuterStep, ProgressRecord};
use serde::Serialize;

use super::fields::state_vtk;
use crate::config::RunConfig;
use crate::error::{CliResult, Stage};
use crate::run::RunDir;

#[derive(Serialize)]
struct LogRow {
    outer: usize,
    iter: usize,
    cost: f64,
    grad_norm: f64,
    chance: f64,
    omega: f64,
    gamma: f64,
    step: f64,
    cg_iters: usize,
    /// Cumulative over the whole run.
    n_pde_solves: usize,
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    outer_steps: &'a [OuterStep],
    n_pde_solves: usize,
    final_cost: f64,
    final_chance: f64,
    mean_q: f64,
    var_q: f64,
}

/// Turns per-solve counters (which restart every outer step) into a running
/// total.
struct SolveTally {
    outer: usize,
    before: usize,
    last: usize,
}

impl SolveTally {
    fn total(&mut self, r: &ProgressRecord) -> usize {
        if r.outer != self.outer {
            self.before += self.last;
            self.outer = r.outer;
            self.last = 0;
        }
        self.last = r.inner.solves;
        self.before + self.last
    }
}

pub fn optimize(cfg: &RunConfig, run: &mut RunDir) -> CliResult<usize> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let n = model.n_params();
    let mut ev = CostEvaluator::new(&model, &field, cfg.cost.clone()).stage("cost setup")?;
    let mut rows = Vec::new();
    let mut tally = SolveTally { outer: 0, before: 0, last: 0 };
    let res = adaptive_optimize(&mut ev, &vec![cfg.design; n], &cfg.continuation, &mut |r| {
        rows.push(LogRow {
            outer: r.outer,
            iter: r.inner.iter,
            cost: r.inner.cost,
            grad_norm: r.inner.grad_norm,
            chance: r.inner.monitor,
            omega: r.omega,
            gamma: r.gamma,
            step: r.inner.step,
            cg_iters: r.inner.cg_iters,
            n_pde_solves: tally.total(r),
        })
    })
    .stage("optimization")?;
    run.write_jsonl("log.jsonl", &rows)?;

    let phi = porosity_map(&res.design, field.mean()).stage("porosity")?;
    let design_vtk = VtkWriter::new(model.parameter_mesh())
        .point_scalar("design", &res.design)
        .and_then(|w| w.point_scalar("porosity", &phi))
        .stage("vtk export")?
        .finish("optimized design at the mean parameter");
    run.write("design.vtk", design_vtk.as_bytes())?;
    let state = model.solve_state(&phi).stage("state solve")?;
    run.write("state.vtk", state_vtk(&model, &state, &phi, "state at the optimized design")?.as_bytes())?;

    let mut spectra = Vec::new();
    for s in &res.steps {
        let b = &s.breakdown;
        for (j, v) in b.eig_q.iter().enumerate() {
            spectra.push(vec![s.outer as f64, 0.0, (j + 1) as f64, *v]);
        }
        for (j, v) in b.eig_f.iter().enumerate() {
            spectra.push(vec![s.outer as f64, 1.0, (j + 1) as f64, *v]);
        }
    }
    run.write_csv("spectra.csv", &["outer", "is_chance", "j", "lambda"], &spectra)?;
    let chance: Vec<Vec<f64>> = res
        .steps
        .iter()
        .map(|s| vec![s.outer as f64, s.omega, s.gamma, s.breakdown.chance_smoothed, s.breakdown.chance, s.breakdown.penalty])
        .collect();
    run.write_csv("chance.csv", &["outer", "omega", "gamma", "smoothed", "indicator", "penalty"], &chance)?;

    let b = res.final_breakdown();
    let solves = res.solves + 1;
    run.write_json(
        "result.json",
        &OptimizeSummary {
            outer_steps: &res.steps,
            n_pde_solves: solves,
            final_cost: b.cost,
            final_chance: b.chance,
            mean_q: b.mean_q,
            var_q: b.var_q,
        },
    )?;
    Ok(solves)
}
