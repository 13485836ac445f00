//! Run configuration. Every field can also be set from the command line;
//! flags win.

use std::path::{Path, PathBuf};

use actuate_core::{DeviceId, Hyperparameters, StaticController};
use serde::{Deserialize, Serialize};

use crate::contexts::{LocationMode, Specificity};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapSpec {
    pub a: DeviceId,
    pub b: DeviceId,
    pub at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticUtility {
    pub device: String,
    pub action: String,
    pub utility: f64,
}

/// A fixed-utility external controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub name: String,
    #[serde(default)]
    pub default: f64,
    #[serde(default)]
    pub utilities: Vec<StaticUtility>,
}

impl ControllerSpec {
    pub fn build(&self) -> StaticController {
        self.utilities
            .iter()
            .fold(StaticController::new(self.name.clone(), self.default), |c, u| c.with(&u.device, &u.action, u.utility))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Trace JSON-lines file to replay.
    pub trace: Option<PathBuf>,
    /// Generate the trace instead of reading one.
    pub synthetic: bool,
    /// Scenario JSON for synthetic traces; the built-in one when absent.
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's day count.
    pub days: Option<usize>,
    /// Expected context schema; must equal the trace's.
    pub schema: Option<PathBuf>,
    pub sensor_map: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub hyperparameters: Hyperparameters,
    /// Rewrites every request of the trace to this specificity.
    pub specificity: Option<Specificity>,
    pub location_mode: Option<LocationMode>,
    pub seed: u64,
    pub swap: Option<SwapSpec>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub max_proposals: Option<usize>,
    pub window: usize,
    pub baseline: Option<Baseline>,
    /// Pad the schema with random numeric attributes up to this size.
    pub pad_to: Option<usize>,
    pub controllers: Vec<ControllerSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trace: None,
            synthetic: false,
            scenario: None,
            days: None,
            schema: None,
            sensor_map: None,
            registry: None,
            hyperparameters: Hyperparameters::default(),
            specificity: None,
            location_mode: None,
            seed: 0,
            swap: None,
            out: None,
            max_proposals: None,
            window: 30,
            baseline: None,
            pad_to: None,
            controllers: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(Error::json(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.trace,
            &mut cfg.scenario,
            &mut cfg.schema,
            &mut cfg.sensor_map,
            &mut cfg.registry,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters.validate()?;
        let w = self.hyperparameters.implicit_weight;
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::Config(format!("implicit_weight must be in (0, 1], got {w}")));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.max_proposals == Some(0) {
            return Err(Error::Config("max_proposals must be at least 1".into()));
        }
        match (&self.trace, self.synthetic) {
            (Some(_), true) => return Err(Error::Config("give either a trace or --synthetic, not both".into())),
            (None, false) => return Err(Error::Config("no trace given (use --trace or --synthetic)".into())),
            _ => {}
        }
        for p in [&self.trace, &self.scenario, &self.schema, &self.sensor_map, &self.registry].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.jsonl"), "").unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"trace": "t.jsonl", "seed": 7, "hyperparameters": {"k": 5}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.trace.as_deref(), Some(dir.path().join("t.jsonl").as_path()));
        assert_eq!(cfg.hyperparameters.k, 5);
        assert_eq!(cfg.hyperparameters.reward, Hyperparameters::default().reward);
        assert_eq!(cfg.window, 30);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = RunConfig { synthetic: true, ..Default::default() };
        cfg.validate().unwrap();
        cfg.hyperparameters.implicit_weight = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { trace: Some("/no/such/file".into()), ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"tracce": "x"}"#).is_err());
    }
}
