//! Engine configuration and the TOML config file that carries it.
//!
//! ```toml
//! [engine]
//! fps = 10.0                # video frame rate, converts seconds to frames
//! window_seconds = 4.0      # max time span of a pairwise/transition edge
//! box_removal_seconds = 0.5 # detections closer than this to a box are dropped
//! affinity_floor = 1e-6     # smallest affinity used inside a logarithm
//! separation_cap = 30.0     # upper bound on the prelabel separation penalty
//! max_label_sweeps = 10     # alpha-expansion sweep limit
//! st_attach_seconds = 0.5   # source/sink attachment window at each cluster end
//!
//! [synth]                   # optional, see `SynthConfig`
//! seed = 7
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub fps: f64,
    pub window_seconds: f64,
    pub box_removal_seconds: f64,
    pub affinity_floor: f64,
    pub separation_cap: f64,
    pub max_label_sweeps: u32,
    pub st_attach_seconds: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            window_seconds: 4.0,
            box_removal_seconds: 0.5,
            affinity_floor: 1e-6,
            separation_cap: 30.0,
            max_label_sweeps: 10,
            st_attach_seconds: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn with_fps(fps: f64) -> Self {
        Self { fps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fps", self.fps),
            ("window_seconds", self.window_seconds),
            ("box_removal_seconds", self.box_removal_seconds),
            ("affinity_floor", self.affinity_floor),
            ("separation_cap", self.separation_cap),
            ("st_attach_seconds", self.st_attach_seconds),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.affinity_floor >= 1.0 {
            return Err(Error::InvalidConfig("affinity_floor must be below 1".into()));
        }
        if self.max_label_sweeps == 0 {
            return Err(Error::InvalidConfig("max_label_sweeps must be positive".into()));
        }
        Ok(())
    }

    pub fn seconds_to_frames(&self, seconds: f64) -> u32 {
        (seconds * self.fps).round().max(0.0) as u32
    }

    /// Longest frame gap an affinity or transition edge may span.
    pub fn window_frames(&self) -> u32 {
        self.seconds_to_frames(self.window_seconds).max(1)
    }

    pub fn attach_frames(&self) -> u32 {
        self.seconds_to_frames(self.st_attach_seconds)
    }
}

/// Contents of a config file: engine settings plus an optional synthetic
/// scenario description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub engine: EngineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl ProjectConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ProjectConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.engine.validate()?;
        if let Some(synth) = &cfg.synth {
            synth.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        EngineConfig::default().validate().unwrap();
        let c = EngineConfig::with_fps(10.0);
        assert_eq!(c.window_frames(), 40);
        assert_eq!(c.attach_frames(), 5);
    }

    #[test]
    fn rejects_bad_values() {
        let c = EngineConfig {
            affinity_floor: 1.5,
            ..EngineConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(EngineConfig::with_fps(0.0).validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ProjectConfig::from_toml_str("[engine]\nfps = 12.5\n").unwrap();
        assert_eq!(cfg.engine.fps, 12.5);
        assert_eq!(cfg.engine.window_seconds, 4.0);
        let again = ProjectConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
        assert!(ProjectConfig::from_toml_str("[engine]\nfsp = 1\n").is_err());
    }
}
