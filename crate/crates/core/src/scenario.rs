//! Scenario files: one JSON document drives simulation, moment tables,
//! SDE runs and the full verification suite.
//!
//! The SDE block may be omitted — the limit coefficients are then derived
//! from the branching side (drift = immigration mean, diffusion scale =
//! offspring variance). When both are given they must agree; a mismatch
//! is a load error, not a warning. Tolerances are a map from gate name to
//! threshold; unknown names are rejected so typos cannot silently ungate
//! a test.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::diffusion::SDEParams;
use crate::gw_engine::GWConfig;
use crate::step_process::floor_nt;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Gate names a scenario may set tolerances for, with the comparison
/// direction each implies documented in the harness.
pub const KNOWN_TOLERANCES: &[&str] = &[
    "reconstruction_abs",
    "psi_identity_abs",
    "moment_z",
    "fdd_ks",
    "fdd_monotone_se",
    "centered_ks",
    "line_sup",
    "line_pass_frac",
    "cond1_decay_factor",
    "cond11_decay_pairs",
    "cond2_final",
    "cond_monotone_se",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario validation failed: field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("override `{0}` is malformed; expected dotted.path=value")]
    MalformedOverride(String),
    #[error("override path `{0}` does not address an object field")]
    OverridePath(String),
}

fn err(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub gw: GWConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SDEParams>,
    pub n_ladder: Vec<u64>,
    pub t_values: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon_t: f64,
    pub theta_values: Vec<f64>,
    pub n_paths: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Euler grid for the `sde` command.
    #[serde(default = "default_sde_steps")]
    pub sde_steps: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_sde_steps() -> u64 {
    2048
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_file_with_overrides(path, &[])
    }

    /// Load, apply `key.path=value` overrides (last wins), validate.
    pub fn from_file_with_overrides(
        path: &Path,
        overrides: &[String],
    ) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut value: Value = serde_json::from_str(&text)?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        let scenario: Scenario = serde_json::from_value(value)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCENARIO_SCHEMA_VERSION {
            return Err(err(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCENARIO_SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if self.name.is_empty() {
            return Err(err("name", "must be nonempty"));
        }
        self.gw
            .validate()
            .map_err(|e| err("gw.horizon_K", e.to_string()))?;
        if self.n_ladder.is_empty() {
            return Err(err("n_ladder", "must be nonempty"));
        }
        if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("n_ladder", "must be strictly increasing"));
        }
        if self.n_ladder[0] == 0 {
            return Err(err("n_ladder", "scaling indices must be >= 1"));
        }
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(err("T", "must be positive and finite"));
        }
        if self.t_values.is_empty() {
            return Err(err("t_values", "must be nonempty"));
        }
        for &t in &self.t_values {
            if !(t > 0.0 && t.is_finite()) {
                return Err(err("t_values", format!("t must be positive, got {t}")));
            }
        }
        for &theta in &self.theta_values {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(err(
                    "theta_values",
                    format!("theta must be positive, got {theta}"),
                ));
            }
        }
        if self.n_paths == 0 {
            return Err(err("n_paths", "must be >= 1"));
        }
        if self.sde_steps == 0 {
            return Err(err("sde_steps", "must be >= 1"));
        }
        let n_max = *self.n_ladder.last().expect("nonempty ladder");
        let t_need = self.t_values.iter().cloned().fold(self.horizon_t, f64::max);
        let k_needed = floor_nt(n_max, t_need);
        if self.gw.horizon < k_needed {
            return Err(err(
                "gw.horizon_K",
                format!(
                    "horizon {} is shorter than floor(n_max * T) = {k_needed}",
                    self.gw.horizon
                ),
            ));
        }
        for key in self.tolerances.keys() {
            if !KNOWN_TOLERANCES.contains(&key.as_str()) {
                return Err(err(
                    "tolerances",
                    format!("unknown gate `{key}` (known: {KNOWN_TOLERANCES:?})"),
                ));
            }
        }
        if let Some(sde) = &self.sde {
            let derived = SDEParams::from_gw(&self.gw);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
            if !close(sde.m_eps, derived.m_eps) {
                return Err(err(
                    "sde.m_eps",
                    format!(
                        "{} disagrees with the immigration mean {}",
                        sde.m_eps, derived.m_eps
                    ),
                ));
            }
            if !close(sde.sigma2_xi, derived.sigma2_xi) {
                return Err(err(
                    "sde.sigma2_xi",
                    format!(
                        "{} disagrees with the offspring variance {}",
                        sde.sigma2_xi, derived.sigma2_xi
                    ),
                ));
            }
        }
        Ok(())
    }

    /// SDE coefficients: the given block (already cross-checked) or the
    /// branching-implied values.
    pub fn effective_sde(&self) -> SDEParams {
        self.sde.unwrap_or_else(|| SDEParams::from_gw(&self.gw))
    }

    pub fn tolerance(&self, key: &str) -> Option<f64> {
        self.tolerances.get(key).copied()
    }
}

/// Apply one `dotted.path=value` override to a parsed JSON tree. The
/// value is parsed as JSON when possible (numbers, booleans, arrays),
/// else taken as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), ScenarioError> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| ScenarioError::MalformedOverride(spec.to_string()))?;
    if path.is_empty() {
        return Err(ScenarioError::MalformedOverride(spec.to_string()));
    }
    let value: Value =
        serde_json::from_str(raw_value).unwrap_or_else(|_| Value::String(raw_value.to_string()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ScenarioError::OverridePath(path.to_string()))?;
        if i + 1 == segments.len() {
            obj.insert((*seg).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*seg).to_string())
            .or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    unreachable!("nonempty segment list");
}
