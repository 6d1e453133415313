//! Steady two-temperature heat transfer, poro-elastic insulator and
//! thermoelastic beam, with the design QoIs.

pub mod model;
pub mod params;
pub mod porosity;
pub mod qoi;

pub use model::{ForwardModel, Linearization, SolveCounter, StateSolution};
pub use params::{ChanceConfig, ChanceSign, MaterialParams, PlaneMode};
pub use porosity::{porosity_map, sigmoid, sigmoid_derivatives};
pub use qoi::{p_norm_stress, thermal_compliance, ChanceFunction, Qoi, ThermalCompliance};
