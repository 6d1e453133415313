//! Run configuration: one JSON document with every knob, validated before
//! any solve.

use std::path::Path;

use chance_design::fem::{Layout, Mesh};
use chance_design::field::{MaternConfig, MaternField};
use chance_design::forward::{ForwardModel, MaterialParams};
use chance_design::optim::{ContinuationConfig, CostConfig};
use chance_design::risk::{EigOptions, Estimator};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    pub nx: usize,
    pub ny: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { nx: 16, ny: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run directory name below the output root.
    pub name: String,
    pub layout: Layout,
    pub mesh: Resolution,
    pub material: MaterialParams,
    pub field: MaternConfig,
    /// Uniform design value for evaluation commands and the optimizer start.
    pub design: f64,
    pub cost: CostConfig,
    pub continuation: ContinuationConfig,
    pub eig: EigOptions,
    pub estimator: Estimator,
    pub samples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            layout: Layout::default(),
            mesh: Resolution::default(),
            material: MaterialParams::default(),
            field: MaternConfig::default(),
            design: 0.5,
            cost: CostConfig::default(),
            continuation: ContinuationConfig::default(),
            eig: EigOptions::default(),
            estimator: Estimator::Quad,
            samples: 100,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e: chance_design::Error| CliError::Config(e.to_string());
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(CliError::Config(format!("run name `{}` must be a single path component", self.name)));
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(CliError::Config("mesh resolution must be positive".into()));
        }
        if !self.design.is_finite() {
            return Err(CliError::Config("design value must be finite".into()));
        }
        chance_design::field::params_from_stats(self.field.sigma, self.field.corr_length).map_err(bad)?;
        if !(self.field.theta_x > 0.0 && self.field.theta_y > 0.0) {
            return Err(CliError::Config("anisotropy magnitudes must be positive".into()));
        }
        self.layout.validate().map_err(bad)?;
        self.material.validate().map_err(bad)?;
        self.cost.validate().map_err(bad)?;
        self.eig.validate().map_err(bad)?;
        self.continuation.validate().map_err(bad)?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration; independent of key order and
    /// of which defaults were spelled out in the input.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical(&value).as_bytes()))
    }

    pub fn model(&self) -> CliResult<ForwardModel> {
        let mesh = Mesh::beam_insulator(&self.layout, self.mesh.nx, self.mesh.ny).stage("mesh")?;
        ForwardModel::new(mesh, self.material.clone()).stage("forward model")
    }

    pub fn field(&self, model: &ForwardModel) -> CliResult<MaternField> {
        MaternField::new(model.parameter_mesh(), self.field.clone()).stage("random field")
    }
}

/// JSON text with object keys sorted at every level.
fn canonical(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> =
                keys.iter().map(|k| format!("{}:{}", Value::String((*k).clone()), canonical(&map[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_spelled_out_defaults() {
        let a = RunConfig::from_json(r#"{"seed": 3, "mesh": {"nx": 8, "ny": 6}}"#).unwrap();
        let b = RunConfig::from_json(r#"{"mesh": {"ny": 6, "nx": 8}, "seed": 3, "design": 0.5}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_json(r#"{"seed": 4, "mesh": {"nx": 8, "ny": 6}}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = RunConfig::from_json(r#"{"cost": {"chance": {"t_crit": 1.0}}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cost.chance"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = RunConfig::from_json(r#"{"cost": {"penalty": -1.0}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(RunConfig::from_json(r#"{"name": "../escape"}"#).is_err());
    }
}
