//! Merged scenario configuration, loaded from a JSON file.
//!
//! Every section is optional in the file; missing fields take their
//! defaults and unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flightsim::SimConfig;
use crate::ovgen::OvGenConfig;
use crate::router::RouterConfig;
use crate::verify::CongestedConfig;

/// Settings for accuracy checks and the joint cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Trial aircraft per accuracy check.
    pub trials: usize,
    /// Added to the scenario seed so verification fleets never replay the
    /// fleet that generated a contract.
    pub seed_offset: u64,
    /// Run the joint re-simulation cross-check after the congested scenario.
    pub cross_check: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed_offset: 1_000_003,
            cross_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed. Overrides the seeds inside `sim` and `congested`.
    pub seed: u64,
    pub router: RouterConfig,
    pub sim: SimConfig,
    pub ovgen: OvGenConfig,
    pub congested: CongestedConfig,
    pub verify: VerifyConfig,
    /// Where artifacts are written; `None` leaves the choice to the caller.
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.router.validate()?;
        self.sim.validate()?;
        self.ovgen.validate()?;
        self.congested.validate()?;
        if self.verify.trials == 0 {
            return Err(crate::Error::Config("verify.trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Simulation settings with the master seed applied.
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    pub fn congested(&self) -> CongestedConfig {
        CongestedConfig {
            seed: self.seed,
            ..self.congested.clone()
        }
    }

    /// Simulation settings for verification fleets.
    pub fn verify_sim(&self) -> SimConfig {
        SimConfig {
            seed: self.seed.wrapping_add(self.verify.seed_offset),
            ..self.sim.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"seed": 9, "router": {"weight": 1.1}, "congested": {"target": 5}}"#).unwrap();
        assert_eq!(cfg.router.weight, 1.1);
        assert_eq!(cfg.router.arc_radius, RouterConfig::default().arc_radius);
        assert_eq!(cfg.congested().target, 5);
        assert_eq!(cfg.congested().seed, 9);
        assert_eq!(cfg.sim().seed, 9);
        assert_ne!(cfg.verify_sim().seed, 9);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(matches!(ScenarioConfig::from_json(r#"{"router": {"wieght": 1.1}}"#), Err(Error::Json(_))));
        assert!(matches!(ScenarioConfig::from_json(r#"{"colour": 1}"#), Err(Error::Json(_))));
        assert!(matches!(ScenarioConfig::from_json(r#"{"router": {"weight": 3.0}}"#), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::from_json(r#"{"verify": {"trials": 0}}"#), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ScenarioConfig::default();
        cfg.seed = 42;
        cfg.output_dir = Some("out".into());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }
}
