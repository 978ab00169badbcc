//! TOML pipeline configuration. Every field has a default, so an empty file
//! is a valid configuration for the default seeded run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classifier::{ArchConfig, TrainConfig};
use crate::features::DetectorParams;
use crate::geom::SolverConfig;
use crate::par::Execution;
use crate::sim::{JitterProfile, WorldConfig};
use crate::zones::{MapParams, Thresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub world_seed: u64,
    pub train_seed: u64,
    pub test_seed: u64,
    pub train_frames: usize,
    pub test_frames: usize,
    /// Square render size (px).
    pub image_size: usize,
    pub fov_deg: f64,
    /// Zone count of the emitted expert-label file.
    pub expert_zones: usize,
    pub train_profile: JitterProfile,
    pub test_profile: JitterProfile,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            world_seed: 1,
            train_seed: 11,
            test_seed: 23,
            train_frames: 600,
            test_frames: 600,
            image_size: 64,
            fov_deg: 90.0,
            expert_zones: 50,
            train_profile: JitterProfile::train(),
            test_profile: JitterProfile::test(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneMode {
    Uniform,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZonesConfig {
    pub mode: ZoneMode,
    /// Zone count for uniform partitioning.
    pub count: usize,
}

impl Default for ZonesConfig {
    fn default() -> Self {
        ZonesConfig { mode: ZoneMode::Uniform, count: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapsConfig {
    pub m_select: usize,
    pub delta_r: f64,
}

impl Default for MapsConfig {
    fn default() -> Self {
        let d = MapParams::default();
        MapsConfig { m_select: d.m_select, delta_r: d.delta_r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Seed of the weight initialisation.
    pub init_seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { arch: ArchConfig::default(), train: TrainConfig::default(), init_seed: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub zone_counts: Vec<usize>,
    pub repeats: usize,
    /// Training epochs per sweep cell; unset keeps the classifier setting.
    /// Shorter than a full run by default, since the sweep retrains
    /// `zone_counts × repeats` times.
    pub epochs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { zone_counts: (1..=8).map(|k| 5 * k).collect(), repeats: 10, epochs: Some(40) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub e_values: Vec<usize>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { e_values: vec![0, 1, 2, 3] }
    }
}

/// Locations of artifacts from earlier stages. Relative paths are resolved
/// against the config file's directory. Unset stages are recomputed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Output directory of `generate` (holds `train/` and `test/`).
    pub data: Option<PathBuf>,
    /// Output directory of `train`.
    pub model: Option<PathBuf>,
    /// Output directory of `build-map`.
    pub maps: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub world: WorldConfig,
    pub zones: ZonesConfig,
    pub detector: DetectorParams,
    pub maps: MapsConfig,
    pub solver: SolverConfig,
    pub classifier: ClassifierConfig,
    pub localize: Thresholds,
    pub sweep: SweepConfig,
    pub perturb: PerturbConfig,
    pub paths: PathsConfig,
    /// Use the data-parallel code paths (results are identical either way).
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sim: SimConfig::default(),
            world: WorldConfig::default(),
            zones: ZonesConfig::default(),
            detector: DetectorParams::default(),
            maps: MapsConfig::default(),
            solver: SolverConfig::default(),
            classifier: ClassifierConfig::default(),
            localize: Thresholds::default(),
            sweep: SweepConfig::default(),
            perturb: PerturbConfig::default(),
            paths: PathsConfig::default(),
            parallel: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths.
    pub fn from_file(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.data, &mut cfg.paths.model, &mut cfg.paths.maps].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        if self.sim.train_frames < 4 || self.sim.test_frames < 1 {
            return bad("need at least 4 training frames and 1 test frame");
        }
        if self.maps.m_select < 3 {
            return bad("maps.m_select must be at least 3");
        }
        if !(self.maps.delta_r > 0.0) {
            return bad("maps.delta_r must be positive");
        }
        if !(self.detector.ratio > 0.0 && self.detector.ratio < 1.0) {
            return bad("detector.ratio must lie in (0, 1)");
        }
        if self.sweep.repeats == 0 {
            return bad("sweep.repeats must be at least 1");
        }
        if !self.perturb.e_values.contains(&0) {
            return bad("perturb.e_values must include 0");
        }
        self.world.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        self.classifier.arch.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn map_params(&self) -> MapParams {
        MapParams { m_select: self.maps.m_select, delta_r: self.maps.delta_r, detector: self.detector, solver: self.solver }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = PipelineConfig::default();
        cfg.zones.count = 7;
        cfg.localize.max_jump = Some(55.0);
        cfg.sweep.epochs = Some(3);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml("[maps]\nm_selct = 4\n").is_err());
        assert!(PipelineConfig::from_toml("[maps]\nm_select = 2\n").is_err());
        assert!(PipelineConfig::from_toml("[perturb]\ne_values = [1, 2]\n").is_err());
    }
}
