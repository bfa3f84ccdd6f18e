//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sliding_core::integrator::IntegratorOptions;
use sliding_core::CharacteristicMap;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_law() -> String {
    "filippov".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sliding_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
    #[serde(default = "default_law")]
    pub law: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    /// Parse and validate everything that does not depend on the scenario.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if !(self.t0.is_finite() && self.t_end.is_finite()) || self.t_end < self.t0 {
            return bad(format!(
                "need finite t0 ≤ t_end, got t0 = {}, t_end = {}",
                self.t0, self.t_end
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 must be finite".into());
        }
        if let Some((k, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("parameter {k} is not finite ({v})"));
        }
        self.law()?;
        self.options()?;
        Ok(())
    }

    pub fn law(&self) -> Result<CharacteristicMap, CliError> {
        Ok(CharacteristicMap::by_name(&self.law)?)
    }

    pub fn options(&self) -> Result<IntegratorOptions, CliError> {
        let mut opts = IntegratorOptions::new(self.step, self.t_end);
        if let Some(t) = &self.tolerances {
            let positive = |name: &str, v: f64| {
                if v.is_finite() && v > 0.0 {
                    Ok(v)
                } else {
                    Err(CliError::Config(format!(
                        "{name} must be positive, got {v}"
                    )))
                }
            };
            if let Some(v) = t.event_tol {
                opts.event_tol = positive("event_tol", v)?;
            }
            if let Some(v) = t.sliding_tol {
                opts.sliding_tol = positive("sliding_tol", v)?;
            }
            if let Some(v) = t.max_events {
                if v == 0 {
                    return Err(CliError::Config("max_events must be at least 1".into()));
                }
                opts.max_events = v;
            }
        }
        Ok(opts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
