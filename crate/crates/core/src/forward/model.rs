//! Discrete coupled thermomechanical model.
//!
//! The state vector is `x = [θ; u]`: thermal dofs first, then the free
//! displacement dofs. Every operator is affine in the nodal porosity `φ`
//! (one value per insulator vertex), and the state Jacobian is block lower
//! triangular,
//!
//! ```text
//! J = [ K_T(φ)    0    ]
//!     [ -C      K_M(φ) ]
//! ```
//!
//! because temperatures load the mechanics but not vice versa. One Cholesky
//! factorization of each diagonal block therefore serves solves with both
//! `J` and `Jᵀ`.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::params::MaterialParams;
use crate::error::{Error, Result};
use crate::fem::affine::{AffineMatrix, AffineMatrixBuilder, AffineVector};
use crate::fem::assembly::{cell_mass, cell_stiffness, edge_mass, Constraints};
use crate::fem::mesh::{BoundaryTag, Mesh, Subdomain};
use crate::linalg::{CsrMatrix, SkylineCholesky, TripletBuilder};

const NONE: usize = usize::MAX;

/// Counts solver work so callers can audit PDE-solve budgets.
#[derive(Debug, Default)]
pub struct SolveCounter {
    state: AtomicUsize,
    linear: AtomicUsize,
    factorizations: AtomicUsize,
}

impl SolveCounter {
    pub fn state_solves(&self) -> usize {
        self.state.load(Ordering::Relaxed)
    }
    /// Solves with `J` or `Jᵀ` other than the state solve itself.
    pub fn linear_solves(&self) -> usize {
        self.linear.load(Ordering::Relaxed)
    }
    pub fn factorizations(&self) -> usize {
        self.factorizations.load(Ordering::Relaxed)
    }
    pub fn total_pde_solves(&self) -> usize {
        self.state_solves() + self.linear_solves()
    }
    pub fn reset(&self) {
        self.state.store(0, Ordering::Relaxed);
        self.linear.store(0, Ordering::Relaxed);
        self.factorizations.store(0, Ordering::Relaxed);
    }
}

/// Solved state `x = [θ; u_free]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSolution {
    pub x: Vec<f64>,
    n_thermal: usize,
}

impl StateSolution {
    pub fn thermal(&self) -> &[f64] {
        &self.x[..self.n_thermal]
    }
    pub fn mechanical(&self) -> &[f64] {
        &self.x[self.n_thermal..]
    }
}

/// Per-cell strain operator: `(εx, εy, γxy) = B u_cell`.
#[derive(Clone, Debug)]
pub(crate) struct CellStrain {
    pub cell: usize,
    pub area: f64,
    /// Full-vector displacement dofs of the cell.
    pub dofs: [usize; 6],
    pub b: [[f64; 6]; 3],
}

#[derive(Debug)]
pub struct ForwardModel {
    mesh: Mesh,
    params: MaterialParams,
    insulator: Mesh,
    param_vertex: Vec<usize>,
    vertex_param: Vec<usize>,
    n_thermal: usize,
    t_solid: Vec<usize>,
    t_fluid: Vec<usize>,
    t_beam: Vec<usize>,
    kt: AffineMatrix,
    bt: AffineVector,
    mech: Constraints,
    km: AffineMatrix,
    bm: AffineVector,
    coupling: CsrMatrix,
    coupling_t: CsrMatrix,
    q_matrix: AffineMatrix,
    q_load: AffineVector,
    strains: Vec<CellStrain>,
    counter: SolveCounter,
}

/// `∫_edge N_i N_j N_k` for the two edge hat functions.
fn edge_triple(len: f64, i: usize, j: usize, k: usize) -> f64 {
    if i == j && j == k {
        len / 4.0
    } else {
        len / 12.0
    }
}

impl ForwardModel {
    pub fn new(mesh: Mesh, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        let (insulator, param_vertex) = mesh.submesh(Subdomain::Insulator)?;
        let nv = mesh.n_vertices();
        let np = param_vertex.len();
        let mut vertex_param = vec![NONE; nv];
        for (k, &v) in param_vertex.iter().enumerate() {
            vertex_param[v] = k;
        }
        let ins = mesh.vertex_mask(Subdomain::Insulator);
        let beam = mesh.vertex_mask(Subdomain::Beam);

        // thermal numbering: one shared dof on the interface
        let (mut t_solid, mut t_fluid, mut t_beam) = (vec![NONE; nv], vec![NONE; nv], vec![NONE; nv]);
        let mut n_thermal = 0;
        for v in 0..nv {
            match (ins[v], beam[v]) {
                (true, true) => {
                    t_solid[v] = n_thermal;
                    t_fluid[v] = n_thermal;
                    t_beam[v] = n_thermal;
                    n_thermal += 1;
                }
                (true, false) => {
                    t_solid[v] = n_thermal;
                    t_fluid[v] = n_thermal + 1;
                    n_thermal += 2;
                }
                (false, true) => {
                    t_beam[v] = n_thermal;
                    n_thermal += 1;
                }
                (false, false) => return Err(Error::Mesh(format!("vertex {v} belongs to no cell"))),
            }
        }

        let p = &params;
        let mut kt = AffineMatrixBuilder::new(n_thermal, n_thermal, np);
        let mut qa = AffineMatrixBuilder::new(n_thermal, n_thermal, np);
        let mut bt = AffineVector::zeros(n_thermal, np);
        let mut qc = AffineVector::zeros(n_thermal, np);

        let nm = 2 * nv;
        let mut km = AffineMatrixBuilder::new(nm, nm, np);
        let mut fm = vec![0.0; nm];
        let mut coupling = TripletBuilder::new(nm, n_thermal);
        let lam_s = p.in_plane_lambda(p.lambda, p.mu);
        let lam_b = p.in_plane_lambda(p.lambda_b, p.mu_b);
        let beta = p.thermal_stress_coeff();
        let inv_d = 1.0 / p.compressibility;
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let mut strains = Vec::new();

        for (c, cell) in mesh.cells().iter().enumerate() {
            let (g, area) = mesh.p1_gradients(c);
            let s = cell_stiffness(&g, area, id);
            let mass = cell_mass(area);
            let tag = mesh.cell_tags()[c];
            match tag {
                Subdomain::Insulator => {
                    let pk = cell.map(|v| vertex_param[v]);
                    for i in 0..3 {
                        let (si, fi) = (t_solid[cell[i]], t_fluid[cell[i]]);
                        for j in 0..3 {
                            let (sj, fj) = (t_solid[cell[j]], t_fluid[cell[j]]);
                            // φ_s κ_s = κ_s (1 - φ_f)
                            for b in [&mut kt, &mut qa] {
                                b.add_const(si, sj, p.kappa_s * s[i][j]);
                                for &k in &pk {
                                    b.add_param(k, si, sj, -p.kappa_s * s[i][j] / 3.0);
                                    b.add_param(k, fi, fj, p.kappa_f * s[i][j] / 3.0);
                                }
                            }
                            let hm = p.h * mass[i][j];
                            kt.add_const(si, sj, hm);
                            kt.add_const(fi, fj, hm);
                            kt.add_const(si, fj, -hm);
                            kt.add_const(fi, sj, -hm);
                        }
                    }
                    for a in 0..3 {
                        for ca in 0..2 {
                            let ra = 2 * cell[a] + ca;
                            for b in 0..3 {
                                for cb in 0..2 {
                                    let rb = 2 * cell[b] + cb;
                                    let div = area * g[a][ca] * g[b][cb];
                                    let shear = p.mu
                                        * area
                                        * (if ca == cb { g[a][0] * g[b][0] + g[a][1] * g[b][1] } else { 0.0 }
                                            + g[a][cb] * g[b][ca]);
                                    km.add_const(ra, rb, (lam_s + inv_d) * div + shear);
                                    for &k in &pk {
                                        km.add_param(k, ra, rb, -2.0 * inv_d * div / 3.0);
                                    }
                                }
                            }
                        }
                    }
                    let mut b = [[0.0; 6]; 3];
                    for a in 0..3 {
                        b[0][2 * a] = g[a][0];
                        b[1][2 * a + 1] = g[a][1];
                        b[2][2 * a] = g[a][1];
                        b[2][2 * a + 1] = g[a][0];
                    }
                    let dofs = [
                        2 * cell[0],
                        2 * cell[0] + 1,
                        2 * cell[1],
                        2 * cell[1] + 1,
                        2 * cell[2],
                        2 * cell[2] + 1,
                    ];
                    strains.push(CellStrain { cell: c, area, dofs, b });
                }
                Subdomain::Beam => {
                    for i in 0..3 {
                        for j in 0..3 {
                            kt.add_const(t_beam[cell[i]], t_beam[cell[j]], p.kappa_b * s[i][j]);
                        }
                    }
                    for a in 0..3 {
                        for ca in 0..2 {
                            let ra = 2 * cell[a] + ca;
                            for b in 0..3 {
                                for cb in 0..2 {
                                    let div = area * g[a][ca] * g[b][cb];
                                    let shear = p.mu_b
                                        * area
                                        * (if ca == cb { g[a][0] * g[b][0] + g[a][1] * g[b][1] } else { 0.0 }
                                            + g[a][cb] * g[b][ca]);
                                    km.add_const(ra, 2 * cell[b] + cb, lam_b * div + shear);
                                }
                                coupling.push(ra, t_beam[cell[b]], beta * area / 3.0 * g[a][ca]);
                            }
                            fm[ra] -= beta * p.theta_ref * area * g[a][ca];
                        }
                    }
                }
            }
        }

        let mut fixed = Vec::new();
        for e in mesh.boundary() {
            let len = mesh.edge_length(e);
            let ev = e.vertices;
            let on_insulator = mesh.cell_tags()[e.cell] == Subdomain::Insulator;
            let ambient = match e.tag {
                BoundaryTag::Exterior => Some(p.theta_exterior),
                BoundaryTag::Interior | BoundaryTag::BeamTop => Some(p.theta_interior),
                BoundaryTag::Side | BoundaryTag::Interface => None,
            };
            if let Some(amb) = ambient {
                let em = edge_mass(len);
                if on_insulator {
                    let pk = ev.map(|v| vertex_param[v]);
                    for i in 0..2 {
                        let (si, fi) = (t_solid[ev[i]], t_fluid[ev[i]]);
                        for j in 0..2 {
                            let (sj, fj) = (t_solid[ev[j]], t_fluid[ev[j]]);
                            for b in [&mut kt, &mut qa] {
                                b.add_const(si, sj, p.h_air * em[i][j]);
                                for (kk, &k) in pk.iter().enumerate() {
                                    let e3 = p.h_air * edge_triple(len, i, j, kk);
                                    b.add_param(k, si, sj, -e3);
                                    b.add_param(k, fi, fj, e3);
                                }
                            }
                        }
                        for load in [&mut bt, &mut qc] {
                            load.add_const(si, p.h_air * amb * len / 2.0);
                            for (kk, &k) in pk.iter().enumerate() {
                                let e2 = p.h_air * amb * em[kk][i];
                                load.add_param(k, si, -e2);
                                load.add_param(k, fi, e2);
                            }
                        }
                    }
                } else {
                    for i in 0..2 {
                        let bi = t_beam[ev[i]];
                        for j in 0..2 {
                            kt.add_const(bi, t_beam[ev[j]], p.h_air * em[i][j]);
                        }
                        bt.add_const(bi, p.h_air * amb * len / 2.0);
                    }
                }
            }
            if e.tag == BoundaryTag::Interior {
                for &v in &ev {
                    fm[2 * v] += p.traction[0] * len / 2.0;
                    fm[2 * v + 1] += p.traction[1] * len / 2.0;
                }
            }
            let clamp = match e.tag {
                BoundaryTag::Exterior => Some(p.u_bottom),
                BoundaryTag::BeamTop => Some(p.u_top),
                _ => None,
            };
            if let Some(u) = clamp {
                for &v in &ev {
                    fixed.push((2 * v, u[0]));
                    fixed.push((2 * v + 1, u[1]));
                }
            }
        }

        let mech = Constraints::new(nm, &fixed)?;
        let km_full = km.build();
        let free = mech.free().to_vec();
        let km_ff = km_full.submatrix(&free, &free);
        let lift = km_full.times_fixed(&free, mech.fixed(), mech.values());
        let f_free: Vec<f64> = free.iter().map(|&d| fm[d]).collect();
        let bm = AffineVector::from_parts(f_free, vec![], np).sub(&lift);
        let all_t: Vec<usize> = (0..n_thermal).collect();
        let coupling = coupling.to_csr().submatrix(&free, &all_t);
        let coupling_t = coupling.transpose();

        Ok(Self {
            mesh,
            params,
            insulator,
            param_vertex,
            vertex_param,
            n_thermal,
            t_solid,
            t_fluid,
            t_beam,
            kt: kt.build(),
            bt,
            mech,
            km: km_ff,
            bm,
            coupling,
            coupling_t,
            q_matrix: qa.build(),
            q_load: qc,
            strains,
            counter: SolveCounter::default(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    /// The insulator as a standalone mesh; its vertices index the
    /// parameter space.
    pub fn parameter_mesh(&self) -> &Mesh {
        &self.insulator
    }

    pub fn n_params(&self) -> usize {
        self.param_vertex.len()
    }

    pub fn n_thermal(&self) -> usize {
        self.n_thermal
    }

    pub fn n_state(&self) -> usize {
        self.n_thermal + self.mech.free().len()
    }

    pub fn counter(&self) -> &SolveCounter {
        &self.counter
    }

    pub(crate) fn strains(&self) -> &[CellStrain] {
        &self.strains
    }

    pub(crate) fn mech_constraints(&self) -> &Constraints {
        &self.mech
    }

    pub(crate) fn q_operators(&self) -> (&AffineMatrix, &AffineVector) {
        (&self.q_matrix, &self.q_load)
    }

    fn check_phi(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.n_params() {
            return Err(Error::Shape(format!("porosity has {} values, expected {}", phi.len(), self.n_params())));
        }
        if let Some(v) = phi.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("porosity value {v} outside (0,1)")));
        }
        Ok(())
    }

    /// Factors both diagonal blocks at `φ` and solves the state problem.
    pub fn linearize(&self, phi: &[f64]) -> Result<Linearization<'_>> {
        self.check_phi(phi)?;
        let ft = SkylineCholesky::factor(&self.kt.eval(phi)?)
            .map_err(|e| Error::Solver(format!("thermal block: {e}")))?;
        let fm = SkylineCholesky::factor(&self.km.eval(phi)?)
            .map_err(|e| Error::Solver(format!("mechanical block: {e}")))?;
        self.counter.factorizations.fetch_add(2, Ordering::Relaxed);
        let mut lin = Linearization { model: self, phi: phi.to_vec(), ft, fm, state: StateSolution { x: vec![], n_thermal: 0 } };
        let theta = lin.ft.solve(&self.bt.eval(phi));
        let mut rhs = self.bm.eval(phi);
        for (r, c) in rhs.iter_mut().zip(self.coupling.mul_vec(&theta)) {
            *r += c;
        }
        let u = lin.fm.solve(&rhs);
        let mut x = theta;
        x.extend(u);
        lin.state = StateSolution { x, n_thermal: self.n_thermal };
        self.counter.state.fetch_add(1, Ordering::Relaxed);
        Ok(lin)
    }

    pub fn solve_state(&self, phi: &[f64]) -> Result<StateSolution> {
        Ok(self.linearize(phi)?.state)
    }

    /// Residual `r(x, φ) = J(φ) x - b(φ)`.
    pub fn residual(&self, x: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        self.check_phi(phi)?;
        let (theta, u) = x.split_at(self.n_thermal);
        let mut rt = self.kt.apply(phi, theta);
        for (r, b) in rt.iter_mut().zip(self.bt.eval(phi)) {
            *r -= b;
        }
        let mut rm = self.km.apply(phi, u);
        let cu = self.coupling.mul_vec(theta);
        for ((r, b), c) in rm.iter_mut().zip(self.bm.eval(phi)).zip(cu) {
            *r -= b + c;
        }
        rt.extend(rm);
        Ok(rt)
    }

    /// Nodal `(θs, θf, θb)` on the full mesh; NaN where a phase is absent.
    pub fn temperatures(&self, state: &StateSolution) -> [Vec<f64>; 3] {
        let th = state.thermal();
        let pick = |map: &Vec<usize>| map.iter().map(|&d| if d == NONE { f64::NAN } else { th[d] }).collect();
        [pick(&self.t_solid), pick(&self.t_fluid), pick(&self.t_beam)]
    }

    /// Interleaved nodal displacement on the full mesh, boundary values included.
    pub fn displacement(&self, state: &StateSolution) -> Vec<f64> {
        self.mech.expand(state.mechanical(), false)
    }

    /// Pore pressure `p = -div u / D` on insulator cells (NaN on the beam).
    pub fn pore_pressure(&self, state: &StateSolution) -> Vec<f64> {
        let u = self.displacement(state);
        let mut out = vec![f64::NAN; self.mesh.n_cells()];
        for s in &self.strains {
            let e = strain_of(s, &u);
            out[s.cell] = -(e[0] + e[1]) / self.params.compressibility;
        }
        out
    }

    /// Cellwise von Mises stress: effective solid stress in the insulator
    /// and thermoelastic stress in the beam.
    pub fn von_mises(&self, state: &StateSolution) -> Vec<f64> {
        let p = &self.params;
        let u = self.displacement(state);
        let [_, _, tb] = self.temperatures(state);
        let mut out = vec![0.0; self.mesh.n_cells()];
        for (c, cell) in self.mesh.cells().iter().enumerate() {
            let (g, _) = self.mesh.p1_gradients(c);
            let mut e = [0.0; 3];
            for a in 0..3 {
                let (ux, uy) = (u[2 * cell[a]], u[2 * cell[a] + 1]);
                e[0] += g[a][0] * ux;
                e[1] += g[a][1] * uy;
                e[2] += g[a][1] * ux + g[a][0] * uy;
            }
            let (lam, mu, shift) = match self.mesh.cell_tags()[c] {
                Subdomain::Insulator => (p.lambda, p.mu, 0.0),
                Subdomain::Beam => {
                    let dt = cell.iter().map(|&v| tb[v]).sum::<f64>() / 3.0 - p.theta_ref;
                    (p.lambda_b, p.mu_b, p.thermal_stress_coeff() * dt)
                }
            };
            let s = stress_components(p, lam, mu, e, shift);
            out[c] = von_mises_of(s);
        }
        out
    }

    pub fn param_vertex(&self) -> &[usize] {
        &self.param_vertex
    }

    /// Parameter index of a mesh vertex, if it lies in the insulator.
    pub fn vertex_param(&self, v: usize) -> Option<usize> {
        let k = self.vertex_param[v];
        (k != NONE).then_some(k)
    }
}

pub(crate) fn strain_of(s: &CellStrain, u_full: &[f64]) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (r, row) in s.b.iter().enumerate() {
        e[r] = row.iter().zip(&s.dofs).map(|(b, &d)| b * u_full[d]).sum();
    }
    e
}

/// `(σx, σy, σz, τxy)` for strain `(εx, εy, γxy)`; `shift` is subtracted
/// from the normal stresses.
pub fn stress_components(p: &MaterialParams, lambda: f64, mu: f64, e: [f64; 3], shift: f64) -> [f64; 4] {
    let lam = p.in_plane_lambda(lambda, mu);
    let tr = e[0] + e[1];
    let sx = lam * tr + 2.0 * mu * e[0] - shift;
    let sy = lam * tr + 2.0 * mu * e[1] - shift;
    let sz = match p.plane {
        super::params::PlaneMode::Strain => lambda * tr - shift,
        super::params::PlaneMode::Stress => 0.0,
    };
    [sx, sy, sz, mu * e[2]]
}

/// `sqrt(½[(σx-σy)² + (σy-σz)² + (σz-σx)²] + 3τ²)`
pub fn von_mises_of(s: [f64; 4]) -> f64 {
    let [sx, sy, sz, t] = s;
    (0.5 * ((sx - sy).powi(2) + (sy - sz).powi(2) + (sz - sx).powi(2)) + 3.0 * t * t).sqrt()
}

/// Factored state Jacobian at one porosity, with the solved state.
pub struct Linearization<'a> {
    model: &'a ForwardModel,
    phi: Vec<f64>,
    ft: SkylineCholesky,
    fm: SkylineCholesky,
    pub state: StateSolution,
}

impl<'a> Linearization<'a> {
    pub fn model(&self) -> &'a ForwardModel {
        self.model
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `J x = b`
    pub fn solve_jac(&self, b: &[f64]) -> Vec<f64> {
        let nt = self.model.n_thermal;
        let mut theta = b[..nt].to_vec();
        self.ft.solve_in_place(&mut theta);
        let mut u = b[nt..].to_vec();
        for (r, c) in u.iter_mut().zip(self.model.coupling.mul_vec(&theta)) {
            *r += c;
        }
        self.fm.solve_in_place(&mut u);
        self.model.counter.linear.fetch_add(1, Ordering::Relaxed);
        theta.extend(u);
        theta
    }

    /// `Jᵀ y = b`
    pub fn solve_jac_t(&self, b: &[f64]) -> Vec<f64> {
        let nt = self.model.n_thermal;
        let mut vm = b[nt..].to_vec();
        self.fm.solve_in_place(&mut vm);
        let mut vt = b[..nt].to_vec();
        for (r, c) in vt.iter_mut().zip(self.model.coupling_t.mul_vec(&vm)) {
            *r += c;
        }
        self.ft.solve_in_place(&mut vt);
        self.model.counter.linear.fetch_add(1, Ordering::Relaxed);
        vt.extend(vm);
        vt
    }

    /// `∂r/∂φ w` at the solved state.
    pub fn r_phi(&self, w: &[f64]) -> Vec<f64> {
        let m = self.model;
        let x = &self.state.x;
        let nt = m.n_thermal;
        let mut rt = m.kt.apply_lin(w, &x[..nt]);
        for (r, b) in rt.iter_mut().zip(m.bt.apply_lin(w)) {
            *r -= b;
        }
        let mut rm = m.km.apply_lin(w, &x[nt..]);
        for (r, b) in rm.iter_mut().zip(m.bm.apply_lin(w)) {
            *r -= b;
        }
        rt.extend(rm);
        rt
    }

    /// `(∂r/∂φ)ᵀ y` at the solved state.
    pub fn r_phi_t(&self, y: &[f64]) -> Vec<f64> {
        let m = self.model;
        let x = &self.state.x;
        let nt = m.n_thermal;
        let mut g = m.kt.grad(&x[..nt], &y[..nt]);
        let parts = [m.bt.grad(&y[..nt]), m.km.grad(&x[nt..], &y[nt..]), m.bm.grad(&y[nt..])];
        for k in 0..g.len() {
            g[k] += parts[1][k] - parts[0][k] - parts[2][k];
        }
        g
    }

    /// `(∂J/∂φ · w) z` — the φ-derivative of the Jacobian applied to a state direction.
    pub fn jac_lin(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let m = self.model;
        let nt = m.n_thermal;
        let mut out = m.kt.apply_lin(w, &z[..nt]);
        out.extend(m.km.apply_lin(w, &z[nt..]));
        out
    }

    /// `(∂J/∂φ · w)ᵀ y`
    pub fn jac_lin_t(&self, w: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.model;
        let nt = m.n_thermal;
        let mut out = m.kt.apply_lin_t(w, &y[..nt]);
        out.extend(m.km.apply_lin_t(w, &y[nt..]));
        out
    }

    /// `∇_φ (yᵀ J(φ) z)`
    pub fn jac_grad(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.model;
        let nt = m.n_thermal;
        let mut g = m.kt.grad(&z[..nt], &y[..nt]);
        for (a, b) in g.iter_mut().zip(m.km.grad(&z[nt..], &y[nt..])) {
            *a += b;
        }
        g
    }
}
