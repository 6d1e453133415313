//! `estimate-moments`: Taylor, Monte Carlo or control-variate moments of the
//! thermal compliance at a uniform design.

use chance_design::forward::{porosity_map, thermal_compliance, ThermalCompliance};
use chance_design::risk::{cv_moments, double_pass, mc_moments, Estimator, SampleSet, TaylorModel};
use chance_design::sensitivity::LinearizationPoint;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliResult, Stage};
use crate::run::RunDir;

#[derive(Serialize)]
struct EstimateReport {
    estimator: Estimator,
    mean: f64,
    variance: f64,
    stderr: Option<f64>,
    samples: usize,
    failures: usize,
    n_eig: Option<usize>,
    n_pde_solves: usize,
    /// Analytic count for the Taylor part: state, adjoint and two solves per
    /// Hessian action over both sketch passes.
    expected_taylor_solves: Option<usize>,
}

pub fn estimate(cfg: &RunConfig, run: &mut RunDir) -> CliResult<usize> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let design = vec![cfg.design; model.n_params()];

    let taylor = match cfg.estimator {
        Estimator::Quad | Estimator::Cv => {
            let lp = LinearizationPoint::new(&model, &design, field.mean()).stage("linearization")?;
            let q = ThermalCompliance::new(&model);
            let qp = lp.qoi(&q);
            let eig = double_pass(&qp, &field, &cfg.eig).stage("eigensolver")?;
            let width = eig.basis.len();
            let rows: Vec<Vec<f64>> = eig.values.iter().enumerate().map(|(j, v)| vec![(j + 1) as f64, *v]).collect();
            run.write_csv("spectrum.csv", &["j", "lambda"], &rows)?;
            Some((TaylorModel::new(qp.value(), qp.grad_m().to_vec(), &field, &eig), eig.n_kept(), 2 + 4 * width))
        }
        Estimator::Mc => None,
    };

    let sampled = match cfg.estimator {
        Estimator::Mc | Estimator::Cv => {
            let samples = SampleSet::draw(&field, cfg.samples, cfg.seed);
            let values = samples.evaluate(|m| {
                let phi = porosity_map(&design, m)?;
                let st = model.solve_state(&phi)?;
                Ok(thermal_compliance(&model, &st, &phi))
            });
            Some((samples, values))
        }
        Estimator::Quad => None,
    };

    let est = match (&taylor, &sampled) {
        (Some((t, _, _)), None) => t.moments(),
        (None, Some((_, v))) => mc_moments(v).stage("monte carlo")?,
        (Some((t, _, _)), Some((s, v))) => cv_moments(v, t, s).stage("control variate")?,
        (None, None) => unreachable!("every estimator needs a model or samples"),
    };
    let solves = model.counter().total_pde_solves();
    let report = EstimateReport {
        estimator: cfg.estimator,
        mean: est.mean,
        variance: est.variance,
        stderr: est.stderr,
        samples: est.samples,
        failures: est.failures,
        n_eig: taylor.as_ref().map(|t| t.1),
        n_pde_solves: solves,
        expected_taylor_solves: taylor.as_ref().map(|t| t.2),
    };
    run.write_json("estimate.json", &report)?;
    Ok(solves)
}
