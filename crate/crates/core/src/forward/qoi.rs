//! Quantities of interest and their state/porosity derivatives.
//!
//! Both QoIs are at most affine in the porosity `φ` (for fixed state), so
//! every derivative with two or more `φ` slots vanishes and is not part of
//! the trait.

use super::model::{strain_of, ForwardModel, StateSolution};
use super::params::{ChanceConfig, ChanceSign};
use crate::linalg::dense::dot;

pub trait Qoi: Sync {
    fn value(&self, x: &[f64], phi: &[f64]) -> f64;
    /// `∂q/∂x`
    fn grad_x(&self, x: &[f64], phi: &[f64]) -> Vec<f64>;
    /// `∂q/∂φ`
    fn grad_phi(&self, x: &[f64], phi: &[f64]) -> Vec<f64>;
    /// `q_xx dx`
    fn hess_xx(&self, x: &[f64], phi: &[f64], dx: &[f64]) -> Vec<f64>;
    /// `q_xφ w` (a state-space vector)
    fn hess_xphi(&self, x: &[f64], phi: &[f64], w: &[f64]) -> Vec<f64>;
    /// `q_φx dx` (a parameter-space vector)
    fn hess_phix(&self, x: &[f64], phi: &[f64], dx: &[f64]) -> Vec<f64>;
    /// `q_xxx[a, b, ·]`
    fn third_xxx(&self, x: &[f64], phi: &[f64], a: &[f64], b: &[f64]) -> Vec<f64>;
    /// `q_xxφ[a, b, ·]` (a parameter-space vector)
    fn third_xxphi(&self, x: &[f64], phi: &[f64], a: &[f64], b: &[f64]) -> Vec<f64>;
    /// `q_xxφ[a, ·, w]` (a state-space vector)
    fn third_xphix(&self, x: &[f64], phi: &[f64], a: &[f64], w: &[f64]) -> Vec<f64>;
}

/// `Q = ½ θᵀ A(φ) θ - ½ c(φ)ᵀ θ`: conduction energy plus convective
/// exchange of both insulator phases.
pub struct ThermalCompliance<'a> {
    model: &'a ForwardModel,
}

impl<'a> ThermalCompliance<'a> {
    pub fn new(model: &'a ForwardModel) -> Self {
        Self { model }
    }

    fn pad(&self, mut thermal: Vec<f64>) -> Vec<f64> {
        thermal.resize(self.model.n_state(), 0.0);
        thermal
    }
}

impl Qoi for ThermalCompliance<'_> {
    fn value(&self, x: &[f64], phi: &[f64]) -> f64 {
        let (a, c) = self.model.q_operators();
        let th = &x[..self.model.n_thermal()];
        0.5 * dot(th, &a.apply(phi, th)) - 0.5 * dot(&c.eval(phi), th)
    }

    fn grad_x(&self, x: &[f64], phi: &[f64]) -> Vec<f64> {
        let (a, c) = self.model.q_operators();
        let th = &x[..self.model.n_thermal()];
        let g: Vec<f64> = a.apply(phi, th).iter().zip(c.eval(phi)).map(|(u, v)| u - 0.5 * v).collect();
        self.pad(g)
    }

    fn grad_phi(&self, x: &[f64], _phi: &[f64]) -> Vec<f64> {
        let (a, c) = self.model.q_operators();
        let th = &x[..self.model.n_thermal()];
        a.grad(th, th).iter().zip(c.grad(th)).map(|(u, v)| 0.5 * u - 0.5 * v).collect()
    }

    fn hess_xx(&self, _x: &[f64], phi: &[f64], dx: &[f64]) -> Vec<f64> {
        let (a, _) = self.model.q_operators();
        self.pad(a.apply(phi, &dx[..self.model.n_thermal()]))
    }

    fn hess_xphi(&self, x: &[f64], _phi: &[f64], w: &[f64]) -> Vec<f64> {
        let (a, c) = self.model.q_operators();
        let th = &x[..self.model.n_thermal()];
        let g = a.apply_lin(w, th).iter().zip(c.apply_lin(w)).map(|(u, v)| u - 0.5 * v).collect();
        self.pad(g)
    }

    fn hess_phix(&self, x: &[f64], _phi: &[f64], dx: &[f64]) -> Vec<f64> {
        let (a, c) = self.model.q_operators();
        let nt = self.model.n_thermal();
        let (th, dth) = (&x[..nt], &dx[..nt]);
        a.grad(th, dth).iter().zip(c.grad(dth)).map(|(u, v)| u - 0.5 * v).collect()
    }

    fn third_xxx(&self, _x: &[f64], _phi: &[f64], _a: &[f64], _b: &[f64]) -> Vec<f64> {
        vec![0.0; self.model.n_state()]
    }

    fn third_xxphi(&self, _x: &[f64], _phi: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
        let (m, _) = self.model.q_operators();
        let nt = self.model.n_thermal();
        m.grad(&a[..nt], &b[..nt])
    }

    fn third_xphix(&self, _x: &[f64], _phi: &[f64], a: &[f64], w: &[f64]) -> Vec<f64> {
        let (m, _) = self.model.q_operators();
        self.pad(m.apply_lin(w, &a[..self.model.n_thermal()]))
    }
}

/// Evaluates `Q` for a solved state.
pub fn thermal_compliance(model: &ForwardModel, state: &StateSolution, phi: &[f64]) -> f64 {
    ThermalCompliance::new(model).value(&state.x, phi)
}

/// `(∫ T^p)^{1/p}` for a cellwise-constant field with cell weights `w`.
/// The maximum is factored out before exponentiation.
pub fn p_norm_stress(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vmax == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().zip(weights).map(|(v, w)| w * (v.abs() / vmax).powf(p)).sum();
    vmax * s.powf(1.0 / p)
}

/// Stress limit state built on the p-norm of the insulator's von Mises
/// stress. `value = T_pn - T_cr` for [`ChanceSign::Exceedance`], and
/// `T_cr - T_pn` as printed otherwise; the chance is `P(value >= 0)`.
pub struct ChanceFunction<'a> {
    model: &'a ForwardModel,
    cfg: ChanceConfig,
    /// `y = εᵀ P ε` is the squared von Mises stress for strain `ε`.
    form: [[f64; 3]; 3],
}

/// Per-evaluation scalars of the aggregated stress.
struct Aggregate {
    eps: Vec<[f64; 3]>,
    yref: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    g1: f64,
    g2: f64,
    g3: f64,
    value: f64,
}

impl<'a> ChanceFunction<'a> {
    pub fn new(model: &'a ForwardModel, cfg: ChanceConfig) -> Self {
        let p = model.params();
        let lam = p.in_plane_lambda(p.lambda, p.mu);
        let mu = p.mu;
        // stress rows (σx, σy, σz, τ) as linear maps of (εx, εy, γ)
        let sz = match p.plane {
            super::params::PlaneMode::Strain => [p.lambda, p.lambda, 0.0],
            super::params::PlaneMode::Stress => [0.0, 0.0, 0.0],
        };
        let s = [[lam + 2.0 * mu, lam, 0.0], [lam, lam + 2.0 * mu, 0.0], sz, [0.0, 0.0, mu]];
        let v = [[1.0, -0.5, -0.5, 0.0], [-0.5, 1.0, -0.5, 0.0], [-0.5, -0.5, 1.0, 0.0], [0.0, 0.0, 0.0, 3.0]];
        let mut form = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..4 {
                    for b in 0..4 {
                        form[i][j] += s[a][i] * v[a][b] * s[b][j];
                    }
                }
            }
        }
        Self { model, cfg, form }
    }

    pub fn config(&self) -> &ChanceConfig {
        &self.cfg
    }

    fn sign(&self) -> f64 {
        match self.cfg.sign {
            ChanceSign::Exceedance => 1.0,
            ChanceSign::AsPrinted => -1.0,
        }
    }

    fn quad(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += a[i] * self.form[i][j] * b[j];
            }
        }
        s
    }

    fn cell_strains(&self, u_free: &[f64], homogeneous: bool) -> Vec<[f64; 3]> {
        let u = self.model.mech_constraints().expand(u_free, homogeneous);
        self.model.strains().iter().map(|s| strain_of(s, &u)).collect()
    }

    fn aggregate(&self, x: &[f64]) -> Aggregate {
        let nt = self.model.n_thermal();
        let eps = self.cell_strains(&x[nt..], false);
        let y: Vec<f64> = eps.iter().map(|e| self.quad(e, e).max(0.0)).collect();
        let yref = y.iter().fold(0.0f64, |m, v| m.max(*v));
        let p = self.cfg.p_norm;
        let q = p / 2.0;
        let a = 1.0 / p;
        let (mut s1, mut s2, mut s3) = (vec![0.0; y.len()], vec![0.0; y.len()], vec![0.0; y.len()]);
        if yref == 0.0 {
            return Aggregate { eps, yref: 1.0, s1, s2, s3, g1: 0.0, g2: 0.0, g3: 0.0, value: 0.0 };
        }
        let pow = |t: f64, e: f64| if t == 0.0 && e < 0.0 { 0.0 } else { t.powf(e) };
        let mut sum = 0.0;
        for (c, s) in self.model.strains().iter().enumerate() {
            let t = y[c] / yref;
            let w = s.area;
            sum += w * pow(t, q);
            s1[c] = w * q * pow(t, q - 1.0);
            s2[c] = w * q * (q - 1.0) * pow(t, q - 2.0);
            s3[c] = w * q * (q - 1.0) * (q - 2.0) * pow(t, q - 3.0);
        }
        let r = yref.sqrt();
        Aggregate {
            eps,
            yref,
            s1,
            s2,
            s3,
            g1: r * a * sum.powf(a - 1.0),
            g2: r * a * (a - 1.0) * sum.powf(a - 2.0),
            g3: r * a * (a - 1.0) * (a - 2.0) * sum.powf(a - 3.0),
            value: r * sum.powf(a),
        }
    }

    /// `T_pn` of the state.
    pub fn stress_norm(&self, x: &[f64]) -> f64 {
        self.aggregate(x).value
    }

    /// Accumulates `Σ_c cv_c (2/yref) B_cᵀ P ε_c + Σ_k Σ_c cw_k,c (2/yref) B_cᵀ P dε_k,c`
    /// into a state vector.
    fn scatter(&self, ag: &Aggregate, cv: &[f64], extra: &[(&[f64], &[[f64; 3]])]) -> Vec<f64> {
        let nt = self.model.n_thermal();
        let cons = self.model.mech_constraints();
        let mut full = vec![0.0; cons.n_total()];
        let scale = 2.0 / ag.yref * self.sign();
        for (c, s) in self.model.strains().iter().enumerate() {
            let mut sig = [0.0; 3];
            for i in 0..3 {
                let mut acc = cv[c] * (0..3).map(|j| self.form[i][j] * ag.eps[c][j]).sum::<f64>();
                for (cw, de) in extra {
                    acc += cw[c] * (0..3).map(|j| self.form[i][j] * de[c][j]).sum::<f64>();
                }
                sig[i] = acc * scale;
            }
            for (k, &d) in s.dofs.iter().enumerate() {
                full[d] += (0..3).map(|i| s.b[i][k] * sig[i]).sum::<f64>();
            }
        }
        let mut out = vec![0.0; nt];
        out.extend(cons.restrict(&full));
        out
    }

    /// `(dỹ_c, dε_c)` for a state direction.
    fn directional(&self, ag: &Aggregate, dx: &[f64]) -> (Vec<f64>, Vec<[f64; 3]>) {
        let nt = self.model.n_thermal();
        let de = self.cell_strains(&dx[nt..], true);
        let dy = ag.eps.iter().zip(&de).map(|(e, d)| 2.0 * self.quad(e, d) / ag.yref).collect();
        (dy, de)
    }
}

impl Qoi for ChanceFunction<'_> {
    fn value(&self, x: &[f64], _phi: &[f64]) -> f64 {
        self.sign() * (self.aggregate(x).value - self.cfg.t_cr)
    }

    fn grad_x(&self, x: &[f64], _phi: &[f64]) -> Vec<f64> {
        let ag = self.aggregate(x);
        let cv: Vec<f64> = ag.s1.iter().map(|s| ag.g1 * s).collect();
        self.scatter(&ag, &cv, &[])
    }

    fn grad_phi(&self, _x: &[f64], phi: &[f64]) -> Vec<f64> {
        vec![0.0; phi.len()]
    }

    fn hess_xx(&self, x: &[f64], _phi: &[f64], dx: &[f64]) -> Vec<f64> {
        let ag = self.aggregate(x);
        let (dy, de) = self.directional(&ag, dx);
        let sd: f64 = ag.s1.iter().zip(&dy).map(|(s, d)| s * d).sum();
        let cv: Vec<f64> = (0..dy.len()).map(|c| ag.g2 * sd * ag.s1[c] + ag.g1 * ag.s2[c] * dy[c]).collect();
        let cw: Vec<f64> = ag.s1.iter().map(|s| ag.g1 * s).collect();
        self.scatter(&ag, &cv, &[(&cw, &de)])
    }

    fn hess_xphi(&self, x: &[f64], _phi: &[f64], _w: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn hess_phix(&self, _x: &[f64], phi: &[f64], _dx: &[f64]) -> Vec<f64> {
        vec![0.0; phi.len()]
    }

    fn third_xxx(&self, x: &[f64], _phi: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
        let ag = self.aggregate(x);
        let (da, dea) = self.directional(&ag, a);
        let (db, deb) = self.directional(&ag, b);
        let dab: Vec<f64> = dea.iter().zip(&deb).map(|(u, v)| 2.0 * self.quad(u, v) / ag.yref).collect();
        let n = da.len();
        let sa: f64 = (0..n).map(|c| ag.s1[c] * da[c]).sum();
        let sb: f64 = (0..n).map(|c| ag.s1[c] * db[c]).sum();
        let d2ab: f64 = (0..n).map(|c| ag.s2[c] * da[c] * db[c] + ag.s1[c] * dab[c]).sum();
        let cv: Vec<f64> = (0..n)
            .map(|c| {
                ag.g3 * sa * sb * ag.s1[c]
                    + ag.g2 * (d2ab * ag.s1[c] + sb * ag.s2[c] * da[c] + sa * ag.s2[c] * db[c])
                    + ag.g1 * (ag.s3[c] * da[c] * db[c] + ag.s2[c] * dab[c])
            })
            .collect();
        let cwa: Vec<f64> = (0..n).map(|c| ag.g2 * sb * ag.s1[c] + ag.g1 * ag.s2[c] * db[c]).collect();
        let cwb: Vec<f64> = (0..n).map(|c| ag.g2 * sa * ag.s1[c] + ag.g1 * ag.s2[c] * da[c]).collect();
        self.scatter(&ag, &cv, &[(&cwa, &dea), (&cwb, &deb)])
    }

    fn third_xxphi(&self, _x: &[f64], phi: &[f64], _a: &[f64], _b: &[f64]) -> Vec<f64> {
        vec![0.0; phi.len()]
    }

    fn third_xphix(&self, x: &[f64], _phi: &[f64], _a: &[f64], _w: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}
