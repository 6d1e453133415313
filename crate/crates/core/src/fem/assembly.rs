//! Element-by-element assembly for P1 spaces, plus Dirichlet elimination.

use super::mesh::{BoundaryEdge, BoundaryTag, Mesh, Subdomain};
use super::space::FunctionSpace;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SkylineCholesky, TripletBuilder};

/// Dense element matrix and load over the element's local dofs
/// (vertex-major, component-minor).
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub n: usize,
    pub matrix: Vec<f64>,
    pub vector: Vec<f64>,
}

impl LocalSystem {
    fn new(n: usize) -> Self {
        Self { n, matrix: vec![0.0; n * n], vector: vec![0.0; n] }
    }

    fn clear(&mut self) {
        self.matrix.iter_mut().for_each(|v| *v = 0.0);
        self.vector.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.matrix[i * self.n + j] += v;
    }
}

/// Bilinear and linear contributions, claimed per subdomain and per
/// boundary tag.
pub trait Kernel {
    fn claims_cell(&self, _tag: Subdomain) -> bool {
        false
    }
    fn claims_edge(&self, _tag: BoundaryTag) -> bool {
        false
    }
    fn cell(&self, _mesh: &Mesh, _c: usize, _local: &mut LocalSystem) {}
    fn edge(&self, _mesh: &Mesh, _e: &BoundaryEdge, _local: &mut LocalSystem) {}
    /// Regions this kernel expects to exist; missing ones are an error.
    fn requires(&self) -> (Vec<Subdomain>, Vec<BoundaryTag>) {
        (vec![], vec![])
    }
}

/// Sums all claimed element contributions into a global matrix and vector.
pub fn assemble(space: &FunctionSpace, mesh: &Mesh, kernel: &dyn Kernel) -> Result<(CsrMatrix, Vec<f64>)> {
    if space.n_vertices() != mesh.n_vertices() {
        return Err(Error::Shape(format!(
            "space has {} vertices, mesh has {}",
            space.n_vertices(),
            mesh.n_vertices()
        )));
    }
    let (subs, tags) = kernel.requires();
    for s in subs {
        if !mesh.has_subdomain(s) {
            return Err(Error::Mesh(format!("kernel references subdomain {s:?} absent from the mesh")));
        }
    }
    for t in tags {
        if !mesh.has_boundary(t) {
            return Err(Error::Mesh(format!("kernel references boundary {t:?} absent from the mesh")));
        }
    }
    let nc = space.components();
    let n = space.n_dofs();
    let mut trip = TripletBuilder::with_capacity(n, n, mesh.n_cells() * 9 * nc * nc);
    let mut rhs = vec![0.0; n];
    let mut cell_sys = LocalSystem::new(3 * nc);
    for (c, cell) in mesh.cells().iter().enumerate() {
        if !kernel.claims_cell(mesh.cell_tags()[c]) {
            continue;
        }
        cell_sys.clear();
        kernel.cell(mesh, c, &mut cell_sys);
        scatter(space, cell, &cell_sys, &mut trip, &mut rhs);
    }
    let mut edge_sys = LocalSystem::new(2 * nc);
    for e in mesh.boundary() {
        if !kernel.claims_edge(e.tag) {
            continue;
        }
        edge_sys.clear();
        kernel.edge(mesh, e, &mut edge_sys);
        scatter(space, &e.vertices, &edge_sys, &mut trip, &mut rhs);
    }
    Ok((trip.to_csr(), rhs))
}

fn scatter(space: &FunctionSpace, verts: &[usize], local: &LocalSystem, trip: &mut TripletBuilder, rhs: &mut [f64]) {
    let nc = space.components();
    let dof = |k: usize| space.dof(verts[k / nc], k % nc);
    for a in 0..local.n {
        let ga = dof(a);
        rhs[ga] += local.vector[a];
        for b in 0..local.n {
            let v = local.matrix[a * local.n + b];
            if v != 0.0 {
                trip.push(ga, dof(b), v);
            }
        }
    }
}

/// P1 mass matrix on a cell: `area/12 * (1 + δ_ij)`.
pub fn cell_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// P1 mass matrix on an edge: `len/6 * [[2,1],[1,2]]`.
pub fn edge_mass(len: f64) -> [[f64; 2]; 2] {
    [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]]
}

/// `Σ_cells ∫ ∇N_i · K ∇N_j` contribution of one cell with constant tensor `k`.
pub fn cell_stiffness(grads: &[[f64; 2]; 3], area: f64, k: [[f64; 2]; 2]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let kg = [
            k[0][0] * grads[i][0] + k[0][1] * grads[i][1],
            k[1][0] * grads[i][0] + k[1][1] * grads[i][1],
        ];
        for j in 0..3 {
            out[i][j] = area * (kg[0] * grads[j][0] + kg[1] * grads[j][1]);
        }
    }
    out
}

/// Scalar mass matrix `∫ N_i N_j` over the whole mesh.
pub fn mass_matrix(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut t = TripletBuilder::with_capacity(n, n, 9 * mesh.n_cells());
    for (c, cell) in mesh.cells().iter().enumerate() {
        let m = cell_mass(mesh.cell_area(c));
        for a in 0..3 {
            for b in 0..3 {
                t.push(cell[a], cell[b], m[a][b]);
            }
        }
    }
    t.to_csr()
}

/// Row sums of the mass matrix.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let a = mesh.cell_area(c) / 3.0;
        for &v in cell {
            out[v] += a;
        }
    }
    out
}

/// Scalar stiffness matrix `∫ ∇N_i · ∇N_j` over the whole mesh.
pub fn stiffness_matrix(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut t = TripletBuilder::with_capacity(n, n, 9 * mesh.n_cells());
    let id = [[1.0, 0.0], [0.0, 1.0]];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let (g, area) = mesh.p1_gradients(c);
        let k = cell_stiffness(&g, area, id);
        for a in 0..3 {
            for b in 0..3 {
                t.push(cell[a], cell[b], k[a][b]);
            }
        }
    }
    t.to_csr()
}

/// Splits dofs into free and constrained, and eliminates the constrained
/// ones from a symmetric system.
#[derive(Clone, Debug)]
pub struct Constraints {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    values: Vec<f64>,
    /// Position of each dof in `free` (or `usize::MAX`).
    free_index: Vec<usize>,
}

impl Constraints {
    pub fn new(n: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut val = vec![None; n];
        for &(d, v) in pairs {
            if d >= n {
                return Err(Error::Shape(format!("constrained dof {d} out of range {n}")));
            }
            val[d] = Some(v);
        }
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut values = Vec::new();
        let mut free_index = vec![usize::MAX; n];
        for (d, v) in val.iter().enumerate() {
            match v {
                Some(x) => {
                    fixed.push(d);
                    values.push(*x);
                }
                None => {
                    free_index[d] = free.len();
                    free.push(d);
                }
            }
        }
        Ok(Self { n, free, fixed, values, free_index })
    }

    pub fn none(n: usize) -> Self {
        Self::new(n, &[]).expect("empty constraint set")
    }

    pub fn n_total(&self) -> usize {
        self.n
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn free_index(&self, d: usize) -> Option<usize> {
        let k = self.free_index[d];
        (k != usize::MAX).then_some(k)
    }

    /// Full vector with the constrained values and zeros elsewhere.
    pub fn lift_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&d, &v) in self.fixed.iter().zip(&self.values) {
            x[d] = v;
        }
        x
    }

    /// Scatters a free-dof vector into a full vector, inserting `fill` values
    /// (the constrained values, or zeros for homogeneous lifts).
    pub fn expand(&self, free_vals: &[f64], homogeneous: bool) -> Vec<f64> {
        let mut x = if homogeneous { vec![0.0; self.n] } else { self.lift_values() };
        for (&d, &v) in self.free.iter().zip(free_vals) {
            x[d] = v;
        }
        x
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Reduced system `(A_ff, b_f - A_fc x_c)`.
    pub fn reduce(&self, a: &CsrMatrix, b: &[f64]) -> (CsrMatrix, Vec<f64>) {
        let lift = self.lift_values();
        let ax = a.mul_vec(&lift);
        let rhs = self.free.iter().map(|&d| b[d] - ax[d]).collect();
        (a.submatrix(&self.free, &self.free), rhs)
    }
}

/// Solves the symmetric positive definite system `A x = b` with the given
/// dofs held at prescribed values.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], dirichlet: &[(usize, f64)]) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Shape(format!("system {}x{} with rhs {}", a.nrows(), a.ncols(), b.len())));
    }
    let cons = Constraints::new(a.nrows(), dirichlet)?;
    let (aff, rhs) = cons.reduce(a, b);
    let x = if aff.nrows() > 0 { SkylineCholesky::factor(&aff)?.solve(&rhs) } else { vec![] };
    Ok(cons.expand(&x, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::norm;

    struct Poisson;
    impl Kernel for Poisson {
        fn claims_cell(&self, _: Subdomain) -> bool {
            true
        }
        fn cell(&self, mesh: &Mesh, c: usize, local: &mut LocalSystem) {
            let (g, area) = mesh.p1_gradients(c);
            let k = cell_stiffness(&g, area, [[1.0, 0.0], [0.0, 1.0]]);
            for i in 0..3 {
                for j in 0..3 {
                    local.add(i, j, k[i][j]);
                }
            }
        }
    }

    struct EdgeMass(BoundaryTag);
    impl Kernel for EdgeMass {
        fn claims_edge(&self, t: BoundaryTag) -> bool {
            t == self.0
        }
        fn edge(&self, mesh: &Mesh, e: &BoundaryEdge, local: &mut LocalSystem) {
            let m = edge_mass(mesh.edge_length(e));
            for i in 0..2 {
                for j in 0..2 {
                    local.add(i, j, m[i][j]);
                }
            }
        }
        fn requires(&self) -> (Vec<Subdomain>, Vec<BoundaryTag>) {
            (vec![], vec![self.0])
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let m = Mesh::rectangle(1.0, 1.0, 4, 4).unwrap();
        assert!((mass_matrix(&m).sum() - 1.0).abs() < 1e-14);
        assert!((lumped_mass(&m).iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn edge_mass_sums_to_length() {
        let m = Mesh::rectangle(1.0, 1.0, 1, 1).unwrap();
        let s = FunctionSpace::scalar(&m);
        let (a, _) = assemble(&s, &m, &EdgeMass(BoundaryTag::Exterior)).unwrap();
        assert!((a.sum() - 1.0).abs() < 1e-15);
        let err = assemble(&s, &m, &EdgeMass(BoundaryTag::BeamTop)).unwrap_err();
        assert!(matches!(err, Error::Mesh(_)));
    }

    #[test]
    fn patch_test_and_linear_reproduction() {
        let m = Mesh::rectangle(1.0, 1.0, 5, 5).unwrap();
        let s = FunctionSpace::scalar(&m);
        let (a, _) = assemble(&s, &m, &Poisson).unwrap();
        assert!(a.asymmetry() < 1e-12);
        let lin: Vec<f64> = m.vertices().iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
        let r = a.mul_vec(&lin);
        let on_boundary = boundary_vertices(&m);
        for (v, ri) in r.iter().enumerate() {
            if !on_boundary[v] {
                assert!(ri.abs() < 1e-12);
            }
        }
        let bc: Vec<(usize, f64)> = (0..m.n_vertices()).filter(|&v| on_boundary[v]).map(|v| (v, lin[v])).collect();
        let x = solve_sparse(&a, &vec![0.0; m.n_vertices()], &bc).unwrap();
        for (u, v) in x.iter().zip(&lin) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_solve() {
        let b = vec![1.0, -2.0, 3.5];
        let x = solve_sparse(&CsrMatrix::identity(3), &b, &[]).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn manufactured_solution_converges_quadratically() {
        use std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let m = Mesh::rectangle(1.0, 1.0, n, n).unwrap();
            let s = FunctionSpace::scalar(&m);
            let (a, _) = assemble(&s, &m, &Poisson).unwrap();
            let exact: Vec<f64> = m.vertices().iter().map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
            // load: f = 2π² u, integrated with the consistent mass matrix
            let f: Vec<f64> = exact.iter().map(|u| 2.0 * PI * PI * u).collect();
            let b = mass_matrix(&m).mul_vec(&f);
            let on_boundary = boundary_vertices(&m);
            let bc: Vec<(usize, f64)> = (0..m.n_vertices()).filter(|&v| on_boundary[v]).map(|v| (v, 0.0)).collect();
            let x = solve_sparse(&a, &b, &bc).unwrap();
            let e: Vec<f64> = x.iter().zip(&exact).map(|(u, v)| u - v).collect();
            let mass = mass_matrix(&m);
            errs.push(crate::linalg::dense::dot(&e, &mass.mul_vec(&e)).sqrt());
            assert!(norm(&a.mul_vec(&x)).is_finite());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.4..4.6).contains(&ratio), "ratio {ratio}, errors {errs:?}");
        }
    }

    fn boundary_vertices(m: &Mesh) -> Vec<bool> {
        let mut b = vec![false; m.n_vertices()];
        for e in m.boundary() {
            b[e.vertices[0]] = true;
            b[e.vertices[1]] = true;
        }
        b
    }
}
