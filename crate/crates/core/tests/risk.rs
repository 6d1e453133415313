use chance_design::fem::{Layout, Mesh};
use chance_design::field::{MaternConfig, MaternField};
use chance_design::forward::*;
use chance_design::linalg::dense::dot;
use chance_design::risk::*;
use chance_design::sensitivity::LinearizationPoint;
use nalgebra::{DMatrix, SymmetricEigen};

fn diag_h(d: &[f64]) -> DenseHessian {
    DenseHessian(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
}

#[test]
fn diagonal_toy_spectrum_is_recovered() {
    let mut d = vec![0.0; 30];
    d[4] = 3.0;
    d[11] = 2.0;
    d[20] = 1.0;
    let cov = DiagonalCovariance(vec![1.0; 30]);
    let r = double_pass(&diag_h(&d), &cov, &EigOptions { n_eig: 3, oversampling: 5, seed: 2 }).unwrap();
    for (got, want) in r.values.iter().zip([3.0, 2.0, 1.0]) {
        assert!((got - want).abs() < 1e-10, "{got}");
    }
    assert!(r.orthonormality < 1e-10);
}

#[test]
fn negative_eigenvalues_are_kept_and_sorted_by_magnitude() {
    let d = [0.5, -4.0, 2.0, 0.0, 0.0, 0.0];
    let cov = DiagonalCovariance(vec![1.0; 6]);
    let r = double_pass(&diag_h(&d), &cov, &EigOptions { n_eig: 3, oversampling: 3, seed: 0 }).unwrap();
    assert!((r.values[0] + 4.0).abs() < 1e-12 && (r.values[1] - 2.0).abs() < 1e-12);
}

#[test]
fn rank_deficient_sketch_returns_fewer_pairs() {
    let d = [1.0, 2.0, 0.0, 0.0];
    let cov = DiagonalCovariance(vec![1.0; 4]);
    let r = double_pass(&diag_h(&d), &cov, &EigOptions { n_eig: 3, oversampling: 1, seed: 0 }).unwrap();
    assert_eq!(r.n_kept(), 2);
}

#[test]
fn taylor_moments_match_dense_trace_formulas() {
    let n = 50;
    let c: Vec<f64> = (0..n).map(|i| 0.5 + 0.03 * i as f64).collect();
    let h: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() * 2.0 / (1.0 + i as f64)).collect();
    let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
    let cov = DiagonalCovariance(c.clone());
    let eig = double_pass(&diag_h(&h), &cov, &EigOptions { n_eig: n, oversampling: 0, seed: 1 }).unwrap();
    let model = TaylorModel::new(1.5, g.clone(), &cov, &eig);
    let mom = model.moments();
    let tr: f64 = (0..n).map(|i| c[i] * h[i]).sum();
    let tr2: f64 = (0..n).map(|i| (c[i] * h[i]).powi(2)).sum();
    let gcg: f64 = (0..n).map(|i| g[i] * c[i] * g[i]).sum();
    assert!((mom.mean - (1.5 + 0.5 * tr)).abs() < 1e-10);
    assert!((mom.variance - (gcg + 0.5 * tr2)).abs() < 1e-10);

    // linear functional: no curvature
    let lin = TaylorModel::from_parts(1.0, g.clone(), cov.cov(&g), vec![], vec![]);
    assert_eq!(lin.moments().mean, 1.0);
    assert!((lin.moments().variance - gcg).abs() < 1e-12);
    let zero = TaylorModel::from_parts(1.0, vec![0.0; n], vec![0.0; n], vec![0.0], vec![vec![0.0; n]]);
    assert_eq!(zero.moments().variance, 0.0);

    // the surrogate reproduces a quadratic exactly
    let dm: Vec<f64> = (0..n).map(|i| (i as f64).sqrt() * 0.1 - 0.3).collect();
    let exact = 1.5 + dot(&g, &dm) + 0.5 * (0..n).map(|i| h[i] * dm[i] * dm[i]).sum::<f64>();
    let hd: Vec<f64> = (0..n).map(|i| h[i] * dm[i]).collect();
    assert!((model.eval_quad(&dm, &cov.prec(&dm)) - exact).abs() < 1e-10);
    assert!((model.eval_quad_exact(&dm, &hd) - exact).abs() < 1e-12);
    assert_eq!(model.eval_quad(&vec![0.0; n], &vec![0.0; n]), 1.5);
}

fn coarse() -> (ForwardModel, MaternField) {
    let mesh = Mesh::beam_insulator(&Layout::default(), 16, 12).unwrap();
    let p = MaterialParams { u_top: [0.0, 0.0], traction: [1.8e7, 0.0], ..Default::default() };
    let model = ForwardModel::new(mesh, p).unwrap();
    let field = MaternField::new(model.parameter_mesh(), MaternConfig { sigma: 0.5, corr_length: 0.25, ..Default::default() }).unwrap();
    (model, field)
}

#[test]
fn randomized_pairs_match_dense_generalized_problem() {
    let (model, field) = coarse();
    let n = model.n_params();
    assert!(n <= 200);
    let lp = LinearizationPoint::new(&model, &vec![0.5; n], &vec![0.0; n]).unwrap();
    let q = ThermalCompliance::new(&model);
    let qp = lp.qoi(&q);
    let mut h = DMatrix::zeros(n, n);
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let hj = qp.hess_action(&e);
        let kj = field.apply_precision(&e).unwrap();
        for i in 0..n {
            h[(i, j)] = hj[i];
            k[(i, j)] = kj[i];
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let k = (&k + k.transpose()) * 0.5;
    let li = k.cholesky().unwrap().l().try_inverse().unwrap();
    let dense: Vec<f64> = SymmetricEigen::new(&li * h * li.transpose()).eigenvalues.iter().copied().collect();
    let worst = |vals: &[f64]| {
        vals.iter()
            .map(|v| dense.iter().map(|d| (v - d).abs() / d.abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };

    // a sketch spanning the space reproduces the dense pairs
    let full = EigOptions { n_eig: 10, oversampling: n - 10, seed: 4 };
    let r = double_pass(&qp, &field, &full).unwrap();
    assert!(worst(&r.values) <= 1e-8, "{}", worst(&r.values));
    assert!(r.orthonormality < 1e-8, "{}", r.orthonormality);

    // narrower sketches converge as the oversampling grows
    let errs: Vec<f64> = [10, 40, 100]
        .iter()
        .map(|&p| worst(&double_pass(&qp, &field, &EigOptions { n_eig: 10, oversampling: p, seed: 4 }).unwrap().values))
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 1e-2, "{errs:?}");

    let opts = EigOptions { n_eig: 10, oversampling: 10, seed: 4 };
    let a = double_pass(&qp, &field, &opts).unwrap();
    let b = double_pass(&qp, &field, &opts).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn sampled_moments_of_simple_functionals() {
    let (model, field) = coarse();
    let n = model.n_params();
    let samples = SampleSet::draw(&field, 10_000, 21);
    let c = mc_moments(&samples.evaluate(|_| Ok(3.25))).unwrap();
    assert_eq!((c.mean, c.variance), (3.25, 0.0));

    let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.2).sin()).collect();
    let est = mc_moments(&samples.evaluate(|m| Ok(dot(&w, m)))).unwrap();
    let exact_var = dot(&w, &field.apply_covariance(&w).unwrap());
    let exact_mean = dot(&w, field.mean());
    assert!((est.mean - exact_mean).abs() < 3.0 * est.stderr.unwrap());
    let var_se = exact_var * (2.0 / 10_000f64).sqrt();
    assert!((est.variance - exact_var).abs() < 3.0 * var_se, "{} vs {exact_var}", est.variance);

    // failures are skipped and counted
    let flaky = samples.truncated(10).evaluate(|m| if m[0] > 0.0 { Ok(1.0) } else { Err(chance_design::Error::Solver("x".into())) });
    let nfail = flaky.iter().filter(|r| r.is_err()).count();
    if nfail <= 8 {
        assert_eq!(mc_moments(&flaky).unwrap().failures, nfail);
    }
}

#[test]
fn control_variate_is_exact_for_quadratics_and_degrades_to_plain_mc() {
    let (_, field) = coarse();
    let n = field.dim();
    let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos() * 0.1).collect();
    let hd: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let h = diag_h(&hd);
    let eig = double_pass(&h, &field, &EigOptions { n_eig: n, oversampling: 0, seed: 0 }).unwrap();
    let model = TaylorModel::new(2.0, g.clone(), &field, &eig);
    let samples = SampleSet::draw(&field, 50, 3);
    let exact = samples.evaluate(|m| {
        let dm: Vec<f64> = m.iter().zip(field.mean()).map(|(a, b)| a - b).collect();
        Ok(2.0 + dot(&g, &dm) + 0.5 * (0..n).map(|i| hd[i] * dm[i] * dm[i]).sum::<f64>())
    });
    let cv = cv_moments(&exact, &model, &samples).unwrap();
    let quad = model.moments();
    assert!((cv.mean - quad.mean).abs() < 1e-9 * quad.mean.abs());
    assert!((cv.variance - quad.variance).abs() < 1e-8 * quad.variance.abs());

    let zero = TaylorModel::from_parts(2.0, vec![0.0; n], vec![0.0; n], vec![], vec![]);
    let plain = mc_moments(&exact).unwrap();
    let degraded = cv_moments(&exact, &zero, &samples).unwrap();
    assert!((plain.mean - degraded.mean).abs() < 1e-13 * plain.mean.abs());
    assert!((plain.variance - degraded.variance).abs() < 1e-10 * plain.variance);
}

#[test]
fn surrogate_chance_tracks_indicator_at_large_omega() {
    let vals: Vec<f64> = (0..400).map(|i| ((i as f64 * 0.37).sin() + 0.02f64.copysign((i as f64).cos())) * 0.5).collect();
    let vals: Vec<f64> = vals.into_iter().filter(|v| v.abs() >= 0.01).collect();
    let ind = chance_prob(&vals, ChanceMode::Indicator);
    let sm = chance_prob(&vals, ChanceMode::Smoothed(1e3));
    assert!((ind - sm).abs() <= 0.01, "{ind} {sm}");
    // monotone in the sample values
    let mut raised = vals.clone();
    raised[3] += 0.1;
    assert!(chance_prob(&raised, ChanceMode::Smoothed(5.0)) >= chance_prob(&vals, ChanceMode::Smoothed(5.0)));
}
