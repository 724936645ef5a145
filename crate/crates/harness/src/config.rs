//! Harness configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use awareness_core::detector::DetectorConfig;
use awareness_core::renderer::{FaultConfig, RenderConfig};
use awareness_core::scenario::ScenarioConfig;
use awareness_core::specgen::SpecDatasetConfig;
use awareness_core::FilterSpec;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub msg_rate_hz: f64,
    pub render_fps: f64,
    pub validate_hz: f64,
    /// Simulation seconds per wall-clock second in live mode.
    pub time_scale: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { msg_rate_hz: 5.0, render_fps: 10.0, validate_hz: 1.0, time_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub host: String,
    pub backend_port: u16,
    pub gateway_port: u16,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), backend_port: 7401, gateway_port: 7402 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 2.0 / 3.0, seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// `evaldet` fails when holdout frame-level accuracy falls below this.
    pub accuracy_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { accuracy_floor: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    /// Optional pairing leeway in milliseconds.
    pub window_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistinguishConfig {
    pub trials: u64,
    pub seed: u64,
}

impl Default for DistinguishConfig {
    fn default() -> Self {
        Self { trials: 1000, seed: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub spec: SpecDatasetConfig,
    pub split: SplitConfig,
    pub detector: DetectorConfig,
    pub render: RenderConfig,
    pub filter: FilterSpec,
    pub rates: Rates,
    pub fault: FaultConfig,
    pub net: NetConfig,
    pub eval: EvalConfig,
    pub validation: ValidationConfig,
    pub distinguish: DistinguishConfig,
    pub out_dir: PathBuf,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario: ScenarioConfig::default(),
            spec: SpecDatasetConfig::default(),
            split: SplitConfig::default(),
            detector: DetectorConfig::default(),
            render: RenderConfig::default(),
            filter: FilterSpec::default(),
            rates: Rates::default(),
            fault: FaultConfig::default(),
            net: NetConfig::default(),
            eval: EvalConfig::default(),
            validation: ValidationConfig::default(),
            distinguish: DistinguishConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        self.scenario.validate()?;
        self.spec.validate()?;
        self.detector.validate()?;
        self.render.validate()?;
        let r = &self.rates;
        for (name, v) in [("msg_rate_hz", r.msg_rate_hz), ("render_fps", r.render_fps), ("validate_hz", r.validate_hz), ("time_scale", r.time_scale)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("rates.{name} must be positive, got {v}"));
            }
        }
        if r.validate_hz > r.render_fps {
            return bad(format!("rates.validate_hz {} exceeds render_fps {}", r.validate_hz, r.render_fps));
        }
        if r.msg_rate_hz != self.scenario.msg_rate_hz {
            return bad(format!(
                "rates.msg_rate_hz {} disagrees with scenario.msg_rate_hz {}",
                r.msg_rate_hz, self.scenario.msg_rate_hz
            ));
        }
        if self.net.backend_port != 0 && self.net.backend_port == self.net.gateway_port {
            return bad(format!("backend and gateway share port {}", self.net.backend_port));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            return bad(format!("split.train_fraction {}", self.split.train_fraction));
        }
        if self.distinguish.trials == 0 {
            return bad("distinguish.trials must be positive".into());
        }
        Ok(())
    }

    /// Sets the scenario seed, as the `--seed` flag does.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn duration_ms(&self) -> u64 {
        (self.scenario.duration_s * 1000.0).round() as u64
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.out_dir)
    }
}

/// Where each command reads and writes its artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn spec_dir(&self) -> PathBuf {
        self.root.join("spec")
    }

    pub fn labels(&self) -> PathBuf {
        self.spec_dir().join("labels.ndjson")
    }

    pub fn split(&self) -> PathBuf {
        self.spec_dir().join("split.json")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn metrics(&self) -> PathBuf {
        self.model_dir().join("metrics.json")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.root.join("run")
    }

    pub fn live_dir(&self) -> PathBuf {
        self.root.join("live")
    }

    pub fn distinguish_report(&self) -> PathBuf {
        self.root.join("distinguish.json")
    }
}

/// File names inside a run directory.
pub mod run_files {
    pub const MESSAGES: &str = "messages.ndjson";
    pub const VERDICTS: &str = "verdicts.ndjson";
    pub const LIVE_VERDICTS: &str = "live_verdicts.ndjson";
    pub const REPORT: &str = "report.json";
    pub const SUMMARY: &str = "run.json";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        HarnessConfig::default().validate().unwrap();
    }

    #[test]
    fn rates_contract() {
        let mut c = HarnessConfig::default();
        c.rates.validate_hz = 20.0;
        assert!(c.validate().is_err());
        let mut c = HarnessConfig::default();
        c.net.gateway_port = c.net.backend_port;
        assert!(c.validate().is_err());
        let mut c = HarnessConfig::default();
        c.rates.msg_rate_hz = 4.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<HarnessConfig>(r#"{"version":1,"colour":"red"}"#).is_err());
        assert!(serde_json::from_str::<HarnessConfig>(r#"{"rates":{"fps":3}}"#).is_err());
        let c: HarnessConfig = serde_json::from_str(r#"{"fault":{"mode":"freeze","active_window":[1000,2000]}}"#).unwrap();
        assert_eq!(c.fault.active_window, Some((1000, 2000)));
    }
}
