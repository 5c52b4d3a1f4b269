//! Run configuration: TOML parsing over defaults, canonical form and hashing.

use std::path::{Path, PathBuf};

use hflsim_core::config::{Selection, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Knobs of the scenario presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    /// UAVs given a scripted small battery in the dropout scenario; empty picks the middle UAV.
    pub dropout_uavs: Vec<usize>,
    /// Scripted battery of those UAVs, J.
    pub dropout_battery_j: f64,
    /// Fixed thresholds of the threshold sweep.
    pub thresholds: Vec<f64>,
    /// Relocation probabilities of the mobility sweep.
    pub mobility_xis: Vec<f64>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            dropout_uavs: Vec::new(),
            dropout_battery_j: 25.0,
            thresholds: vec![0.40, 0.55, 0.70, 0.85],
            mobility_xis: vec![0.1, 0.3, 0.5],
        }
    }
}

impl ScenarioOptions {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.dropout_battery_j > 0.0 && self.dropout_battery_j.is_finite()) {
            return Err(CliError::config("scenario_options.dropout_battery_j", "must be positive"));
        }
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(CliError::config("scenario_options.thresholds", "every threshold must lie in [0, 1]"));
        }
        if self.mobility_xis.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(CliError::config("scenario_options.mobility_xis", "every value must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    /// Scenario preset; absent means a single run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub scenario_options: ScenarioOptions,
    #[serde(flatten)]
    pub sim: SimConfig,
}

impl RunConfig {
    /// Parses TOML text merged over the defaults and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| CliError::config("<document>", e.message().to_string()))?;
        let mut run = RunConfig::default();
        if let Some(v) = table.remove("scenario") {
            run.scenario = Some(v.as_str().ok_or_else(|| CliError::config("scenario", "must be a string"))?.into());
        }
        if let Some(v) = table.remove("out") {
            run.out = Some(v.as_str().ok_or_else(|| CliError::config("out", "must be a string"))?.into());
        }
        if let Some(v) = table.remove("scenario_options") {
            run.scenario_options = from_value(v, "scenario_options")?;
        }
        run.sim = from_value(toml::Value::Table(table), "")?;
        run.validate()?;
        Ok(run)
    }

    /// Reads and parses a config file.
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks every section.
    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario_options.validate()?;
        self.sim.validate().map_err(CliError::from)
    }

    /// Canonical TOML text; parsing it back gives the same configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Canonical JSON of the parts that determine the results.
    pub fn canonical_json(&self) -> String {
        let hashed = RunConfig { out: None, ..self.clone() };
        serde_json::to_string(&hashed).expect("configuration serializes to JSON")
    }

    /// Lowercase hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn from_value<T: serde::de::DeserializeOwned>(v: toml::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        CliError::config(path, e.into_inner().to_string())
    })
}

/// Parses a strategy name such as `adaptive` or `distance-only`.
pub fn parse_strategy(name: &str) -> Result<Selection, CliError> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| CliError::config("--strategy", format!("unknown strategy `{name}`")))
}
