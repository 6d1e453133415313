//! Matérn-type Gaussian random fields through an elliptic SPDE.
//!
//! Samples solve `A m = L ξ` with `A = -γ ∇·(Θ∇) + δ I` plus a Robin
//! boundary term, and `L Lᵀ = M` the mass matrix, so the covariance is
//! `C = A⁻¹ M A⁻¹` and the precision `C⁻¹ = A M⁻¹ A`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::{assemble, cell_mass, cell_stiffness, edge_mass, mass_matrix, Kernel, LocalSystem};
use crate::fem::mesh::{BoundaryEdge, BoundaryTag, Mesh, Subdomain};
use crate::fem::space::FunctionSpace;
use crate::linalg::{CsrMatrix, SkylineCholesky};

/// Smallest anisotropy magnitude accepted; smaller values are raised to it.
pub const ANISOTROPY_FLOOR: f64 = 1e-4;

/// Robin constant appearing in both printed boundary conditions.
const ROBIN_LENGTH: f64 = 1.42;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobinForm {
    /// Boundary mass with coefficient `sqrt(δγ)/1.42`.
    #[default]
    Scaled,
    /// `m + 1.42 ∇m·n = 0`, i.e. boundary mass with coefficient `γ/1.42`.
    Length,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaternConfig {
    /// Pointwise standard deviation target.
    pub sigma: f64,
    pub corr_length: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    /// Orientation of the anisotropy (radians).
    pub angle: f64,
    pub robin: RobinForm,
    /// Rescale the noise by `(det Θ)^{1/4}` so the interior variance stays
    /// `σ²` for anisotropic tensors.
    pub normalize_anisotropy: bool,
    /// Constant mean.
    pub mean: f64,
}

impl Default for MaternConfig {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            corr_length: 0.25,
            theta_x: 1.0,
            theta_y: 1.0,
            angle: std::f64::consts::FRAC_PI_2,
            robin: RobinForm::Scaled,
            normalize_anisotropy: true,
            mean: 0.0,
        }
    }
}

/// `(γ, δ)` giving pointwise variance `σ² = 1/(4πδγ)` and correlation
/// length `L_c = sqrt(8γ/δ)`.
pub fn params_from_stats(sigma: f64, corr_length: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && corr_length > 0.0) || !sigma.is_finite() || !corr_length.is_finite() {
        return Err(Error::Domain(format!("sigma = {sigma} and corr_length = {corr_length} must be positive")));
    }
    let gamma = corr_length / (sigma * (32.0 * std::f64::consts::PI).sqrt());
    let delta = 8.0 * gamma / (corr_length * corr_length);
    Ok((gamma, delta))
}

/// Inverse of [`params_from_stats`].
pub fn stats_from_params(gamma: f64, delta: f64) -> (f64, f64) {
    let sigma = (1.0 / (4.0 * std::f64::consts::PI * delta * gamma)).sqrt();
    (sigma, (8.0 * gamma / delta).sqrt())
}

/// Symmetric tensor with eigenvalues `{ϑx, ϑy}`; at `α = π/2` it is
/// `diag(ϑx, ϑy)`.
pub fn anisotropy_tensor(theta_x: f64, theta_y: f64, angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    let off = (theta_x - theta_y) * s * c;
    [[theta_x * s * s + theta_y * c * c, off], [off, theta_x * c * c + theta_y * s * s]]
}

struct SpdeKernel {
    gamma_theta: [[f64; 2]; 2],
    delta: f64,
    robin: f64,
}

impl Kernel for SpdeKernel {
    fn claims_cell(&self, _tag: Subdomain) -> bool {
        true
    }
    fn claims_edge(&self, _tag: BoundaryTag) -> bool {
        true
    }
    fn cell(&self, mesh: &Mesh, c: usize, local: &mut LocalSystem) {
        let (g, area) = mesh.p1_gradients(c);
        let k = cell_stiffness(&g, area, self.gamma_theta);
        let m = cell_mass(area);
        for i in 0..3 {
            for j in 0..3 {
                local.add(i, j, k[i][j] + self.delta * m[i][j]);
            }
        }
    }
    fn edge(&self, mesh: &Mesh, e: &BoundaryEdge, local: &mut LocalSystem) {
        let m = edge_mass(mesh.edge_length(e));
        for i in 0..2 {
            for j in 0..2 {
                local.add(i, j, self.robin * m[i][j]);
            }
        }
    }
}

#[derive(Debug)]
pub struct MaternField {
    mesh: Mesh,
    cfg: MaternConfig,
    gamma: f64,
    delta: f64,
    noise_scale: f64,
    a: CsrMatrix,
    mass: CsrMatrix,
    fa: SkylineCholesky,
    fm: SkylineCholesky,
    mean: Vec<f64>,
}

impl MaternField {
    pub fn new(mesh: &Mesh, cfg: MaternConfig) -> Result<Self> {
        let (gamma, delta) = params_from_stats(cfg.sigma, cfg.corr_length)?;
        if !(cfg.theta_x > 0.0 && cfg.theta_y > 0.0) {
            return Err(Error::Domain(format!("anisotropy ({}, {}) must be positive", cfg.theta_x, cfg.theta_y)));
        }
        let tx = cfg.theta_x.max(ANISOTROPY_FLOOR);
        let ty = cfg.theta_y.max(ANISOTROPY_FLOOR);
        if tx != cfg.theta_x || ty != cfg.theta_y {
            log::warn!("anisotropy raised to the floor {ANISOTROPY_FLOOR}");
        }
        let theta = anisotropy_tensor(tx, ty, cfg.angle);
        let robin = match cfg.robin {
            RobinForm::Scaled => (delta * gamma).sqrt() / ROBIN_LENGTH,
            RobinForm::Length => gamma / ROBIN_LENGTH,
        };
        let kernel = SpdeKernel { gamma_theta: theta.map(|r| r.map(|v| gamma * v)), delta, robin };
        let (a, _) = assemble(&FunctionSpace::scalar(mesh), mesh, &kernel)?;
        let mass = mass_matrix(mesh);
        let fa = SkylineCholesky::factor(&a)?;
        let fm = SkylineCholesky::factor(&mass)?;
        let noise_scale = if cfg.normalize_anisotropy { (tx * ty).powf(0.25) } else { 1.0 };
        let mean = vec![cfg.mean; mesh.n_vertices()];
        Ok(Self { mesh: mesh.clone(), cfg, gamma, delta, noise_scale, a, mass, fa, fm, mean })
    }

    pub fn config(&self) -> &MaternConfig {
        &self.cfg
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn coefficients(&self) -> (f64, f64) {
        (self.gamma, self.delta)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn operator(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Target pointwise variance `1/(4πδγ)` (times the anisotropy factor
    /// when normalization is off).
    pub fn nominal_variance(&self) -> f64 {
        let (s, _) = stats_from_params(self.gamma, self.delta);
        let det = self.cfg.theta_x.max(ANISOTROPY_FLOOR) * self.cfg.theta_y.max(ANISOTROPY_FLOOR);
        s * s * self.noise_scale.powi(2) / det.sqrt()
    }

    /// Random generator for stream `stream` of seed `seed`.
    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    pub fn draw_noise(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Zero-mean realization `s A⁻¹ L ξ` for given standard normal `ξ`.
    pub fn fluctuation(&self, xi: &[f64]) -> Vec<f64> {
        let mut z = self.fm.mul_lower(xi);
        z.iter_mut().for_each(|v| *v *= self.noise_scale);
        self.fa.solve_in_place(&mut z);
        z
    }

    /// `C⁻¹` applied to the fluctuation of `ξ`, computed without solves:
    /// `A L⁻ᵀ ξ / s`.
    pub fn precision_of_fluctuation(&self, xi: &[f64]) -> Vec<f64> {
        let mut y = xi.to_vec();
        self.fm.solve_upper_in_place(&mut y);
        let mut out = self.a.mul_vec(&y);
        out.iter_mut().for_each(|v| *v /= self.noise_scale);
        out
    }

    pub fn sample(&self, seed: u64, stream: u64) -> Vec<f64> {
        let xi = self.draw_noise(&mut Self::rng(seed, stream));
        self.fluctuation(&xi).iter().zip(&self.mean).map(|(z, m)| z + m).collect()
    }

    /// `C v = s² A⁻¹ M A⁻¹ v`
    pub fn apply_covariance(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut x = self.fa.solve(v);
        x = self.mass.mul_vec(&x);
        self.fa.solve_in_place(&mut x);
        let s2 = self.noise_scale * self.noise_scale;
        Ok(x.into_iter().map(|t| t * s2).collect())
    }

    /// `C⁻¹ v = A M⁻¹ A v / s²`
    pub fn apply_precision(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut x = self.a.mul_vec(v);
        self.fm.solve_in_place(&mut x);
        let s2 = self.noise_scale * self.noise_scale;
        Ok(self.a.mul_vec(&x).into_iter().map(|t| t / s2).collect())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!("field of length {} for {} dofs", v.len(), self.dim())));
        }
        Ok(())
    }

    /// Exact `diag(C)` from `‖row_i(A⁻¹ L)‖² s²`; intended for small meshes.
    pub fn marginal_variance(&self) -> Vec<f64> {
        let n = self.dim();
        let s2 = self.noise_scale * self.noise_scale;
        let cols = crate::par::map_range(n, |j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let mut z = self.fm.mul_lower(&e);
            self.fa.solve_in_place(&mut z);
            z
        });
        let mut var = vec![0.0; n];
        for z in &cols {
            for (v, zi) in var.iter_mut().zip(z) {
                *v += zi * zi * s2;
            }
        }
        var
    }

    /// Sample variance over `count` draws and its standard error per node.
    pub fn marginal_variance_mc(&self, count: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let draws = crate::par::map_range(count, |k| {
            let xi = self.draw_noise(&mut Self::rng(seed, k as u64));
            self.fluctuation(&xi)
        });
        let mut mean = vec![0.0; n];
        for z in &draws {
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v / count as f64;
            }
        }
        let mut var = vec![0.0; n];
        let mut m4 = vec![0.0; n];
        for z in &draws {
            for i in 0..n {
                let d = z[i] - mean[i];
                var[i] += d * d;
                m4[i] += d.powi(4);
            }
        }
        let c = count as f64;
        let mut se = vec![0.0; n];
        for i in 0..n {
            var[i] /= c - 1.0;
            // standard error of the variance from the fourth central moment
            se[i] = ((m4[i] / c - var[i] * var[i] * (c - 3.0) / (c - 1.0)) / c).max(0.0).sqrt();
        }
        (var, se)
    }
}
