//! End-to-end acceptance checks at desk scale. Every criterion prints one
//! PASS/FAIL line with its measured numbers; the test fails if any does.

use std::time::{Duration, Instant};

use chance_design::fem::assembly::lumped_mass;
use chance_design::fem::{Layout, Mesh};
use chance_design::field::{MaternConfig, MaternField};
use chance_design::forward::*;
use chance_design::linalg::dense::dot;
use chance_design::optim::*;
use chance_design::risk::*;
use chance_design::sensitivity::LinearizationPoint;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Coarse benchmark traction: with T_cr = 22.5 MPa the chance constraint
/// binds inside the design box on the 8×6 mesh.
const COARSE_TRACTION: f64 = 2.604e7;
const FINE_TRACTION: f64 = 1.86e7;
/// Same stress level on the 32×24 mesh.
const FINER_TRACTION: f64 = 1.4836e7;
const T_CR: f64 = 22.5e6;

fn model(nx: usize, ny: usize, traction: f64) -> ForwardModel {
    let mesh = Mesh::beam_insulator(&Layout::default(), nx, ny).unwrap();
    let p = MaterialParams { u_top: [0.0, 0.0], traction: [traction, 0.0], ..Default::default() };
    ForwardModel::new(mesh, p).unwrap()
}

fn field(model: &ForwardModel, sigma: f64, corr_length: f64) -> MaternField {
    MaternField::new(model.parameter_mesh(), MaternConfig { sigma, corr_length, ..Default::default() }).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

fn shifted(a: &[f64], b: &[f64], e: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + e * y).collect()
}

fn best_fd(f: impl Fn(f64) -> f64, exact: f64) -> f64 {
    [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6]
        .iter()
        .map(|&e| ((f(e) - f(-e)) / (2.0 * e) - exact).abs() / exact.abs().max(1e-300))
        .fold(f64::INFINITY, f64::min)
}

/// Thermal compliance for the parameter sample `m` at design `d`.
fn compliance(model: &ForwardModel, d: &[f64], m: &[f64]) -> chance_design::Result<f64> {
    let phi: Vec<f64> = d.iter().zip(m).map(|(a, b)| sigmoid(a + b)).collect();
    let st = model.solve_state(&phi)?;
    Ok(thermal_compliance(model, &st, &phi))
}

fn qoi_value(model: &ForwardModel, qoi: &dyn Qoi, d: &[f64], m: &[f64]) -> f64 {
    LinearizationPoint::new(model, d, m).unwrap().qoi(qoi).value()
}

fn taylor_q(model: &ForwardModel, field: &MaternField, d: &[f64], opts: &EigOptions) -> TaylorModel {
    let lp = LinearizationPoint::new(model, d, field.mean()).unwrap();
    let q = ThermalCompliance::new(model);
    let qp = lp.qoi(&q);
    let eig = double_pass(&qp, field, opts).unwrap();
    TaylorModel::new(qp.value(), qp.grad_m().to_vec(), field, &eig)
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn spread(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn adjoint_gradients() -> Outcome {
    let m = model(16, 12, FINE_TRACTION);
    let n = m.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let d = rand_vec(&mut rng, n, 0.5);
    let mbar = rand_vec(&mut rng, n, 0.3);
    let q = ThermalCompliance::new(&m);
    let f = ChanceFunction::new(&m, ChanceConfig { t_cr: T_CR, ..Default::default() });
    let lp = LinearizationPoint::new(&m, &d, &mbar).unwrap();
    let mut worst = [0.0f64; 2];
    for (k, qoi) in [&q as &dyn Qoi, &f].into_iter().enumerate() {
        let qp = lp.qoi(qoi);
        for _ in 0..5 {
            let eta = rand_vec(&mut rng, n, 1.0);
            let exact = dot(&eta, qp.grad_m());
            worst[k] = worst[k].max(best_fd(|e| qoi_value(&m, qoi, &d, &shifted(&mbar, &eta, e)), exact));
        }
    }
    let dofs = m.n_state();
    outcome(
        worst[0] <= 1e-5 && worst[1] <= 1e-5 && dofs <= 2000,
        format!("Q rel err {:.2e}, f rel err {:.2e} (5 directions each, {dofs} state dofs)", worst[0], worst[1]),
    )
}

fn hessian_actions() -> Outcome {
    let m = model(16, 12, FINE_TRACTION);
    let n = m.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let d = rand_vec(&mut rng, n, 0.5);
    let mbar = rand_vec(&mut rng, n, 0.3);
    let q = ThermalCompliance::new(&m);
    let f = ChanceFunction::new(&m, ChanceConfig { t_cr: T_CR, ..Default::default() });
    let lp = LinearizationPoint::new(&m, &d, &mbar).unwrap();
    let (mut sym, mut fd) = (0.0f64, 0.0f64);
    for qoi in [&q as &dyn Qoi, &f] {
        let qp = lp.qoi(qoi);
        for _ in 0..3 {
            let a = rand_vec(&mut rng, n, 1.0);
            let b = rand_vec(&mut rng, n, 1.0);
            let (ha, hb) = (qp.hess_action(&a), qp.hess_action(&b));
            let (x, y) = (dot(&b, &ha), dot(&a, &hb));
            sym = sym.max((x - y).abs() / x.abs().max(y.abs()));
            let exact = dot(&b, &ha);
            let err = best_fd(
                |e| {
                    let lq = LinearizationPoint::new(&m, &d, &shifted(&mbar, &a, e)).unwrap();
                    dot(&b, lq.qoi(qoi).grad_m())
                },
                exact,
            );
            fd = fd.max(err);
        }
    }
    outcome(sym <= 1e-8 && fd <= 1e-4, format!("symmetry {sym:.2e}, FD-of-gradient {fd:.2e}"))
}

fn eigensolver_vs_dense() -> Outcome {
    let m = model(16, 12, FINE_TRACTION);
    let fld = field(&m, 0.25, 0.25);
    let n = m.n_params();
    let lp = LinearizationPoint::new(&m, &vec![0.5; n], fld.mean()).unwrap();
    let q = ThermalCompliance::new(&m);
    let qp = lp.qoi(&q);
    let mut h = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        h.set_column(j, &DVector::from_vec(qp.hess_action(&e)));
        k.set_column(j, &DVector::from_vec(fld.apply_precision(&e).unwrap()));
    }
    let h = (&h + h.transpose()) * 0.5;
    let k = (&k + k.transpose()) * 0.5;
    let li = k.cholesky().unwrap().l().try_inverse().unwrap();
    let mut dense: Vec<f64> = SymmetricEigen::new(&li * h * li.transpose()).eigenvalues.iter().copied().collect();
    dense.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    // modes separated from every other eigenvalue by a relative gap > 1e-6
    let gapped: Vec<usize> = (0..10)
        .filter(|&i| {
            let gap = (0..n).filter(|&j| j != i).map(|j| (dense[i] - dense[j]).abs()).fold(f64::INFINITY, f64::min);
            gap / dense[i].abs() > 1e-6
        })
        .collect();
    // each gapped dense mode against the nearest computed value
    let rel = |vals: &[f64]| {
        gapped
            .iter()
            .map(|&i| vals.iter().map(|v| (v - dense[i]).abs()).fold(f64::INFINITY, f64::min) / dense[i].abs())
            .fold(0.0, f64::max)
    };
    let default = double_pass(&qp, &fld, &EigOptions::default()).unwrap();
    let err = rel(&default.values);
    let full = double_pass(&qp, &fld, &EigOptions { n_eig: 10, oversampling: n - 10, seed: 0 }).unwrap();
    outcome(
        err <= 1e-8,
        format!(
            "n = {n}, sketch {}: max rel err {err:.2e} over {} gapped modes; full-width sketch {:.2e} \
             (slow spectral decay of the order-zero parameter Hessian)",
            EigOptions::default().sketch_width(),
            gapped.len(),
            rel(&full.values)
        ),
    )
}

fn taylor_trace_formulas() -> Outcome {
    let n = 50;
    let c: Vec<f64> = (0..n).map(|i| 0.2 + 0.05 * i as f64).collect();
    let hd: Vec<f64> = (0..n).map(|i| 3.0 * (0.9f64).powi(i as i32) * if i % 3 == 1 { -1.0 } else { 1.0 }).collect();
    let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).sin()).collect();
    let cov = DiagonalCovariance(c.clone());
    let h = DenseHessian(DMatrix::from_diagonal(&DVector::from_column_slice(&hd)));
    let eig = double_pass(&h, &cov, &EigOptions { n_eig: n, oversampling: 0, seed: 3 }).unwrap();
    let mom = TaylorModel::new(0.7, g.clone(), &cov, &eig).moments();
    let tr: f64 = (0..n).map(|i| c[i] * hd[i]).sum();
    let tr2: f64 = (0..n).map(|i| (c[i] * hd[i]).powi(2)).sum();
    let gcg: f64 = (0..n).map(|i| g[i] * g[i] * c[i]).sum();
    let (em, ev) = ((mom.mean - (0.7 + 0.5 * tr)).abs(), (mom.variance - (gcg + 0.5 * tr2)).abs());
    outcome(em <= 1e-10 && ev <= 1e-10, format!("mean err {em:.1e}, variance err {ev:.1e}"))
}

fn mc_convergence() -> Outcome {
    let m = model(8, 6, COARSE_TRACTION);
    let fld = field(&m, 0.5, 0.25);
    let d = vec![0.5; m.n_params()];
    let (trials, big) = (20usize, 10_000usize);
    let mut means = vec![Vec::new(); 3];
    let mut vars = vec![Vec::new(); 3];
    for t in 0..trials {
        let samples = SampleSet::draw(&fld, big, 1_000 + t as u64);
        let vals = samples.evaluate(|mm| compliance(&m, &d, mm));
        for (k, &mk) in [100usize, 1_000, 10_000].iter().enumerate() {
            let est = mc_moments(&vals[..mk]).unwrap();
            means[k].push(est.mean);
            vars[k].push(est.variance);
        }
    }
    // unbiased estimators: the trial-to-trial spread is the RMS error
    let ms = [100.0, 1_000.0, 10_000.0];
    let err_mean: Vec<f64> = means.iter().map(|v| spread(v).sqrt()).collect();
    let err_var: Vec<f64> = vars.iter().map(|v| spread(v).sqrt()).collect();
    let (sm, sv) = (log_slope(&ms, &err_mean), log_slope(&ms, &err_var));
    outcome(
        (sm + 0.5).abs() <= 0.15 && (sv + 0.5).abs() <= 0.15,
        format!("slopes: mean {sm:.3}, variance {sv:.3} ({trials} trials per M)"),
    )
}

fn control_variates() -> Outcome {
    let m = model(8, 6, COARSE_TRACTION);
    let fld = field(&m, 0.5, 0.25);
    let d = vec![0.5; m.n_params()];
    let tq = taylor_q(&m, &fld, &d, &EigOptions::default());
    let (mut mc, mut cv) = (Vec::new(), Vec::new());
    for t in 0..20u64 {
        let samples = SampleSet::draw(&fld, 100, 500 + t);
        let vals = samples.evaluate(|mm| compliance(&m, &d, mm));
        mc.push(mc_moments(&vals).unwrap().mean);
        cv.push(cv_moments(&vals, &tq, &samples).unwrap().mean);
    }
    let (vm, vc) = (spread(&mc), spread(&cv));

    // low-uncertainty scenario on the finer mesh
    let mf = model(16, 12, FINE_TRACTION);
    let low = field(&mf, 0.25, 0.05);
    let df = vec![0.5; mf.n_params()];
    let tl = taylor_q(&mf, &low, &df, &EigOptions::default());
    let samples = SampleSet::draw(&low, 1_000, 77);
    let vals = samples.evaluate(|mm| compliance(&mf, &df, mm));
    let e_mc = mc_moments(&vals).unwrap();
    let e_cv = cv_moments(&vals, &tl, &samples).unwrap();
    let quad = tl.moments().mean;
    let (se_mc, se_cv) = (e_mc.stderr.unwrap(), e_cv.stderr.unwrap());
    let comb = (se_mc * se_mc + se_cv * se_cv).sqrt();
    let agree = (quad - e_mc.mean).abs() <= 3.0 * se_mc
        && (e_cv.mean - e_mc.mean).abs() <= 3.0 * comb
        && (quad - e_cv.mean).abs() <= 3.0 * comb;
    outcome(
        vc <= vm && agree,
        format!(
            "M=100 spread: cv {vc:.3e} vs mc {vm:.3e}; low-uncertainty means quad {quad:.4} cv {:.4} mc {:.4} (se mc {se_mc:.2e}, cv {se_cv:.2e})",
            e_cv.mean, e_mc.mean
        ),
    )
}

fn benchmark_cost(alpha_c: f64) -> CostConfig {
    CostConfig {
        chance: ChanceConfig { t_cr: T_CR, alpha_c, ..Default::default() },
        beta_v: 0.1,
        beta_r: 1e-5,
        omega: 2e-5,
        penalty: 1e3,
        eig_q: EigOptions { n_eig: 10, oversampling: 5, seed: 1 },
        eig_f: EigOptions { n_eig: 10, oversampling: 5, seed: 2 },
        chance_samples: 500,
        ..Default::default()
    }
}

fn benchmark_continuation() -> ContinuationConfig {
    ContinuationConfig {
        omega0: 2e-5,
        gamma0: 1e3,
        max_outer: 10,
        inner: IncgOptions { rel_tol: 1e-6, ..Default::default() },
        ..Default::default()
    }
}

fn design_gradient() -> Outcome {
    let m = model(8, 6, COARSE_TRACTION);
    let fld = field(&m, 0.25, 0.25);
    let n = m.n_params();
    let mut ev = CostEvaluator::new(&m, &fld, benchmark_cost(0.05)).unwrap();
    let mut cont = benchmark_continuation();
    cont.max_outer = 2;
    let opt = adaptive_optimize(&mut ev, &vec![0.5; n], &cont, &mut |_| {}).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let random: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut report = Vec::new();
    let mut worst = 0.0f64;
    let mut active = 0;
    for (name, d) in [("uniform 0", vec![0.0; n]), ("random", random), ("optimized", opt.design)] {
        let e = ev.evaluate(&d, None, true).unwrap();
        active += usize::from(e.breakdown.penalty > 0.0);
        let g = e.gradient.unwrap();
        let mut err = 0.0f64;
        for _ in 0..5 {
            let eta = rand_vec(&mut rng, n, 1.0);
            let exact = dot(&eta, &g);
            err = err.max(best_fd(
                |s| ev.evaluate(&shifted(&d, &eta, s), Some(&e.bases), false).unwrap().breakdown.cost,
                exact,
            ));
        }
        worst = worst.max(err);
        report.push(format!("{name} {err:.1e} (penalty {:.2e})", e.breakdown.penalty));
    }
    outcome(worst <= 1e-4 && active >= 1, format!("{}; {active} active-penalty points", report.join(", ")))
}

fn scalability() -> Outcome {
    let coarse = model(16, 12, FINE_TRACTION);
    let fine = model(32, 24, FINER_TRACTION);
    let dof_ratio = fine.n_state() as f64 / coarse.n_state() as f64;
    let mut spectra = Vec::new();
    let mut iters = Vec::new();
    let mut counter_ok = true;
    for m in [&coarse, &fine] {
        let fld = field(m, 0.25, 0.25);
        let n = m.n_params();
        let t = taylor_q(m, &fld, &vec![0.5; n], &EigOptions::default());
        let mut mags: Vec<f64> = t.values.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        spectra.push(mags[..10].to_vec());
        let ev = CostEvaluator::new(m, &fld, benchmark_cost(0.05)).unwrap();
        let (res, _, _) = optimize_once(&ev, &vec![0.5; n], &benchmark_continuation().inner, &mut |_| {}).unwrap();
        iters.push(res.iterations().max(1));
        for d in [vec![0.0; n], vec![1.0; n], res.d.clone()] {
            let e = ev.evaluate(&d, None, true).unwrap();
            let active = e.breakdown.penalty > 0.0;
            let (kq, kf) = (e.bases.q.len(), e.bases.f.len());
            counter_ok &= e.solves == CostEvaluator::expected_solves(kq, kf, false, true, active);
        }
    }
    let rel: Vec<f64> = spectra[0].iter().zip(&spectra[1]).map(|(a, b)| (a - b).abs() / b).collect();
    let overlay = rel.iter().copied().fold(0.0, f64::max);
    let lead = rel[..3].iter().copied().fold(0.0, f64::max);
    let ratio = iters[0].max(iters[1]) as f64 / iters[0].min(iters[1]) as f64;
    outcome(
        overlay <= 0.1 && ratio <= 2.0 && counter_ok && iters.iter().all(|&i| i <= 100),
        format!(
            "(a) top-10 |λ| curves differ by {overlay:.3}, top-3 by {lead:.3} (state dof ratio {dof_ratio:.2}); (b) INCG iterations {iters:?}; (c) solve counter exact: {counter_ok}"
        ),
    )
}

fn continuation_trend() -> Outcome {
    let m = model(8, 6, COARSE_TRACTION);
    let fld = field(&m, 0.25, 0.25);
    let n = m.n_params();
    let mut report = Vec::new();
    let mut mean_q = Vec::new();
    let mut ok = true;
    for alpha in [0.05, 0.1] {
        let mut ev = CostEvaluator::new(&m, &fld, benchmark_cost(alpha)).unwrap();
        let res = adaptive_optimize(&mut ev, &vec![0.5; n], &benchmark_continuation(), &mut |_| {}).unwrap();
        let b = res.final_breakdown();
        ok &= b.chance <= alpha + 0.01;
        mean_q.push(b.mean_q);
        let path: Vec<String> = res.steps.iter().map(|s| format!("{:.3}", s.breakdown.chance)).collect();
        report.push(format!("α_c={alpha}: chance {:.3}, E[Q] {:.3}, path [{}]", b.chance, b.mean_q, path.join(" ")));
    }
    ok &= mean_q[1] <= mean_q[0];
    outcome(ok, report.join("; "))
}

fn field_statistics() -> Outcome {
    let mesh = Mesh::rectangle(1.0, 0.5, 40, 20).unwrap();
    let f = MaternField::new(&mesh, MaternConfig { sigma: 0.5, corr_length: 0.25, ..Default::default() }).unwrap();
    let var = f.marginal_variance();
    let target = f.nominal_variance();
    let lm = lumped_mass(&mesh);
    let total: f64 = lm.iter().sum();
    let (mut off, mut interior) = (0.0, 0.0f64);
    for (i, p) in mesh.vertices().iter().enumerate() {
        let rel = (var[i] / target - 1.0).abs();
        if rel > 0.1 {
            off += lm[i];
        }
        if p[0].min(1.0 - p[0]).min(p[1]).min(0.5 - p[1]) >= 0.25 {
            interior = interior.max(rel);
        }
    }
    let frac = off / total;
    outcome(
        interior <= 0.1 && frac <= 0.15,
        format!("interior deviation {interior:.3}, >10% region {:.1}% of area", 100.0 * frac),
    )
}

#[test]
fn acceptance_criteria() {
    type Check = fn() -> Outcome;
    let checks: [(&str, Check, Duration); 10] = [
        ("adjoint gradients", adjoint_gradients, Duration::from_secs(60)),
        ("Hessian actions", hessian_actions, Duration::MAX),
        ("randomized eigensolver", eigensolver_vs_dense, Duration::MAX),
        ("Taylor moments", taylor_trace_formulas, Duration::MAX),
        ("MC convergence", mc_convergence, Duration::from_secs(600)),
        ("control variates", control_variates, Duration::MAX),
        ("design gradient", design_gradient, Duration::MAX),
        ("scalability", scalability, Duration::MAX),
        ("continuation", continuation_trend, Duration::from_secs(1800)),
        ("random-field statistics", field_statistics, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in checks.into_iter().enumerate() {
        let t = Instant::now();
        let mut o = check();
        let took = t.elapsed();
        if took > budget {
            o.pass = false;
            o.detail.push_str(&format!(" [over budget {budget:?}]"));
        }
        println!("criterion {:>2} {} — {name}: {} ({:.1}s)", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64());
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
