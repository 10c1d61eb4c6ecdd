//! Tool settings from a TOML or JSON file, overridden by flags.

use std::path::Path;

use parcelpick::detection::DetectorConfig;
use parcelpick::filter::{FilterThresholds, RegionGeometry};
use parcelpick::imaging::CameraIntrinsics;
use parcelpick::ranking::ScorerConfig;
use parcelpick::sampling::SamplerConfig;
use parcelpick::suction::SuctionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSettings {
    pub table_depth: f64,
    pub noise_sigma: f64,
    pub table_color: [u8; 3],
}

impl Default for SceneSettings {
    fn default() -> Self {
        SceneSettings { table_depth: 1.0, noise_sigma: 0.0015, table_color: [78, 80, 86] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub pick_failure_probability: f64,
}

/// Everything tunable from a config file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    /// Seeds every random draw of a command unless `--seed` is given.
    pub seed: Option<u64>,
    pub camera: Option<CameraIntrinsics>,
    pub sampler: SamplerConfig,
    pub region: RegionGeometry,
    pub thresholds: FilterThresholds,
    pub scorer: ScorerConfig,
    pub suction: SuctionConfig,
    pub detector: DetectorConfig,
    pub scene: SceneSettings,
    pub pipeline: PipelineSettings,
}

impl ToolkitConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let checks = [
            self.sampler.validate(),
            self.region.validate(),
            self.thresholds.validate(),
            self.scorer.validate(),
            self.suction.validate(),
            self.camera.map_or(Ok(()), |k| k.validate()),
        ];
        for c in checks {
            c.map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "seed = 3\n[thresholds]\neps5 = 20.0\n[sampler]\nmax_candidates = 50\n").unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"seed": 3, "thresholds": {"eps5": 20.0}, "sampler": {"max_candidates": 50}}"#).unwrap();
        let a = ToolkitConfig::load(&t).unwrap();
        assert_eq!(a, ToolkitConfig::load(&j).unwrap());
        assert_eq!(a.thresholds.eps5, 20.0);
        assert_eq!(a.thresholds.eps6, 50.0);
        assert_eq!(a.sampler.max_gripper_width, 0.14);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "[thresholds]\nepsilon = 1.0\n").unwrap();
        assert!(matches!(ToolkitConfig::load(&t), Err(CliError::Usage(_))));
    }
}
