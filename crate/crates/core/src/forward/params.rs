use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the 2D cross-section treats the out-of-plane direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    #[default]
    Strain,
    Stress,
}

/// Material constants and boundary data of the beam/insulator model (SI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub kappa_s: f64,
    pub kappa_f: f64,
    pub kappa_b: f64,
    /// Solid/fluid interphase exchange coefficient.
    pub h: f64,
    /// Convective film coefficient on exposed boundaries.
    pub h_air: f64,
    /// Ambient temperature below the insulator.
    pub theta_exterior: f64,
    /// Ambient temperature on the beam and exposed insulator top.
    pub theta_interior: f64,
    /// Stress-free reference temperature of the beam.
    pub theta_ref: f64,
    /// Fluid compressibility (1/Pa).
    pub compressibility: f64,
    pub lambda: f64,
    pub mu: f64,
    pub lambda_b: f64,
    pub mu_b: f64,
    pub alpha_t: f64,
    /// Prescribed displacement on the insulator bottom.
    pub u_bottom: [f64; 2],
    /// Prescribed displacement on the beam top.
    pub u_top: [f64; 2],
    /// Traction on the interior-facing exposed edges.
    pub traction: [f64; 2],
    pub plane: PlaneMode,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            kappa_s: 0.477,
            kappa_f: 0.085,
            kappa_b: 5.0,
            h: 81059.0,
            h_air: 10.0,
            theta_exterior: 263.15,
            theta_interior: 293.15,
            theta_ref: 293.15,
            compressibility: 0.25e-8,
            lambda: 6.77e9,
            mu: 3.38e9,
            lambda_b: 17.3e9,
            mu_b: 11.5e9,
            alpha_t: 1e-5,
            u_bottom: [0.0, 0.0],
            u_top: [0.0, -2e-3],
            traction: [0.0, 0.0],
            plane: PlaneMode::Strain,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa_s", self.kappa_s),
            ("kappa_f", self.kappa_f),
            ("kappa_b", self.kappa_b),
            ("h", self.h),
            ("h_air", self.h_air),
            ("compressibility", self.compressibility),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("lambda_b", self.lambda_b),
            ("mu_b", self.mu_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        let finite = [self.theta_exterior, self.theta_interior, self.theta_ref, self.alpha_t]
            .into_iter()
            .chain(self.u_bottom)
            .chain(self.u_top)
            .chain(self.traction);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("non-finite temperature or boundary datum".into()));
        }
        Ok(())
    }

    /// Lamé pair used in the 2D constitutive law for `(lambda, mu)`.
    pub fn in_plane_lambda(&self, lambda: f64, mu: f64) -> f64 {
        match self.plane {
            PlaneMode::Strain => lambda,
            PlaneMode::Stress => 2.0 * lambda * mu / (lambda + 2.0 * mu),
        }
    }

    /// Coefficient of `(θb - θ_ref) div w` in the beam momentum equation.
    pub fn thermal_stress_coeff(&self) -> f64 {
        let full = self.alpha_t * (3.0 * self.lambda_b + 2.0 * self.mu_b);
        match self.plane {
            PlaneMode::Strain => full,
            PlaneMode::Stress => full * 2.0 * self.mu_b / (self.lambda_b + 2.0 * self.mu_b),
        }
    }
}

/// Which tail of the stress distribution the chance constraint bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanceSign {
    /// Limit state `T_pn - T_cr`: penalize exceeding the critical stress.
    #[default]
    Exceedance,
    /// Limit state `T_cr - T_pn`, literally as printed.
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanceConfig {
    /// Critical stress (Pa).
    pub t_cr: f64,
    pub p_norm: f64,
    /// Allowed probability of violation.
    pub alpha_c: f64,
    pub sign: ChanceSign,
}

impl Default for ChanceConfig {
    fn default() -> Self {
        Self { t_cr: 22.5e6, p_norm: 8.0, alpha_c: 0.05, sign: ChanceSign::Exceedance }
    }
}

impl ChanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_cr > 0.0) {
            return Err(Error::Param(format!("t_cr must be positive, got {}", self.t_cr)));
        }
        if !(self.p_norm >= 2.0) {
            return Err(Error::Param(format!("p-norm exponent must be >= 2, got {}", self.p_norm)));
        }
        if !(self.alpha_c > 0.0 && self.alpha_c < 1.0) {
            return Err(Error::Param(format!("alpha_c must lie in (0,1), got {}", self.alpha_c)));
        }
        Ok(())
    }
}
