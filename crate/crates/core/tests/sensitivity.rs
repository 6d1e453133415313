use chance_design::fem::{Layout, Mesh};
use chance_design::forward::*;
use chance_design::linalg::dense::dot;
use chance_design::sensitivity::{CurvatureTerm, LinearizationPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> ForwardModel {
    let mesh = Mesh::beam_insulator(&Layout::default(), 8, 6).unwrap();
    let p = MaterialParams { u_top: [0.0, 0.0], traction: [1.8e7, 0.0], ..Default::default() };
    ForwardModel::new(mesh, p).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

fn shifted(a: &[f64], b: &[f64], e: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + e * y).collect()
}

/// Smallest relative error of a central difference over an ε sweep.
fn best_fd(f: impl Fn(f64) -> f64, exact: f64) -> f64 {
    [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 1e-6]
        .iter()
        .map(|&e| ((f(e) - f(-e)) / (2.0 * e) - exact).abs() / exact.abs().max(1e-300))
        .fold(f64::INFINITY, f64::min)
}

fn qoi_value(m: &ForwardModel, which: usize, d: &[f64], mm: &[f64]) -> f64 {
    let lp = LinearizationPoint::new(m, d, mm).unwrap();
    let q = ThermalCompliance::new(m);
    let f = ChanceFunction::new(m, ChanceConfig::default());
    let qs: [&dyn Qoi; 2] = [&q, &f];
    lp.qoi(qs[which]).value()
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let m = model();
    let n = m.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = rand_vec(&mut rng, n, 0.5);
    let mbar = vec![0.2; n];
    let lp = LinearizationPoint::new(&m, &d, &mbar).unwrap();
    let q = ThermalCompliance::new(&m);
    let f = ChanceFunction::new(&m, ChanceConfig::default());
    for (which, qoi) in [&q as &dyn Qoi, &f].into_iter().enumerate() {
        let qp = lp.qoi(qoi);
        for _ in 0..5 {
            let eta = rand_vec(&mut rng, n, 1.0);
            let exact = dot(&eta, qp.grad_m());
            let err = best_fd(|e| qoi_value(&m, which, &d, &shifted(&mbar, &eta, e)), exact);
            assert!(err <= 1e-5, "qoi {which}: {err}");
        }
        assert_eq!(dot(&vec![0.0; n], qp.grad_m()), 0.0);
    }
}

#[test]
fn compliance_adjoint_has_no_mechanical_part() {
    let m = model();
    let n = m.n_params();
    let lp = LinearizationPoint::new(&m, &vec![0.1; n], &vec![0.0; n]).unwrap();
    let q = ThermalCompliance::new(&m);
    let qp = lp.qoi(&q);
    assert!(qp.adjoint()[m.n_thermal()..].iter().all(|v| *v == 0.0));
    // ⟨∂_x q, δx⟩ = -⟨v, J δx⟩ via Jᵀ v = -∂_x q, checked through J⁻¹
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lin = lp.linearization();
    let gx = q.grad_x(&lp.state().x, lp.phi());
    for _ in 0..5 {
        let b = rand_vec(&mut rng, m.n_state(), 1.0);
        let dx = lin.solve_jac(&b);
        let lhs = dot(&gx, &dx);
        let rhs = -dot(qp.adjoint(), &b);
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()), "{lhs} {rhs}");
    }
}

#[test]
fn hessian_actions_are_symmetric_linear_and_match_gradient_differences() {
    let m = model();
    let n = m.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = rand_vec(&mut rng, n, 0.5);
    let mbar = rand_vec(&mut rng, n, 0.3);
    let lp = LinearizationPoint::new(&m, &d, &mbar).unwrap();
    let q = ThermalCompliance::new(&m);
    let f = ChanceFunction::new(&m, ChanceConfig::default());
    for qoi in [&q as &dyn Qoi, &f] {
        let qp = lp.qoi(qoi);
        for _ in 0..5 {
            let a = rand_vec(&mut rng, n, 1.0);
            let b = rand_vec(&mut rng, n, 1.0);
            let ha = qp.hess_action(&a);
            let hb = qp.hess_action(&b);
            let (x, y) = (dot(&b, &ha), dot(&a, &hb));
            assert!((x - y).abs() <= 1e-8 * x.abs().max(y.abs()), "{x} {y}");
            let h2 = qp.hess_action(&a.iter().map(|v| 2.5 * v).collect::<Vec<_>>());
            let scale = ha.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for (u, v) in h2.iter().zip(&ha) {
                assert!((u - 2.5 * v).abs() <= 1e-10 * 2.5 * scale);
            }
            let exact = dot(&b, &ha);
            let err = best_fd(
                |e| {
                    let p = LinearizationPoint::new(&m, &d, &shifted(&mbar, &a, e)).unwrap();
                    dot(&b, p.qoi(qoi).grad_m())
                },
                exact,
            );
            assert!(err <= 1e-4, "{err}");
        }
        assert!(qp.hess_action(&vec![0.0; n]).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn curvature_gradient_matches_finite_differences() {
    let m = model();
    let n = m.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let d = rand_vec(&mut rng, n, 0.5);
    let mbar = vec![0.0; n];
    let q = ThermalCompliance::new(&m);
    let f = ChanceFunction::new(&m, ChanceConfig::default());
    let w1 = rand_vec(&mut rng, n, 1.0);
    let w2 = rand_vec(&mut rng, n, 1.0);
    let z = rand_vec(&mut rng, n, 1.0);
    for qoi in [&q as &dyn Qoi, &f] {
        // G(d) = 0.7 wᵀH(d)w - 0.4 w2ᵀH(d)w2 + zᵀ∇q(d)
        let g_of = |dd: &[f64]| {
            let p = LinearizationPoint::new(&m, dd, &mbar).unwrap();
            let qp = p.qoi(qoi);
            0.7 * qp.hess_quadratic(&w1) - 0.4 * qp.hess_quadratic(&w2) + dot(&z, qp.grad_m())
        };
        let lp = LinearizationPoint::new(&m, &d, &mbar).unwrap();
        let qp = lp.qoi(qoi);
        let terms = vec![
            CurvatureTerm { weight: 0.7, dir: w1.clone(), pair: qp.incremental(&w1) },
            CurvatureTerm { weight: -0.4, dir: w2.clone(), pair: qp.incremental(&w2) },
        ];
        let before = m.counter().linear_solves();
        let grad = qp.curvature_gradient(&terms, &z);
        assert_eq!(m.counter().linear_solves() - before, 2);
        for _ in 0..3 {
            let eta = rand_vec(&mut rng, n, 1.0);
            let exact = dot(&eta, &grad);
            let err = best_fd(|e| g_of(&shifted(&d, &eta, e)), exact);
            assert!(err <= 1e-4, "{err}");
        }
    }
}

#[test]
fn one_linearization_factors_twice() {
    let m = model();
    let n = m.n_params();
    m.counter().reset();
    let lp = LinearizationPoint::new(&m, &vec![0.0; n], &vec![0.0; n]).unwrap();
    let q = ThermalCompliance::new(&m);
    let qp = lp.qoi(&q);
    for k in 0..3 {
        qp.hess_action(&vec![k as f64; n]);
    }
    assert_eq!(m.counter().factorizations(), 2);
    assert_eq!(m.counter().state_solves(), 1);
    assert_eq!(m.counter().linear_solves(), 1 + 6);
}
