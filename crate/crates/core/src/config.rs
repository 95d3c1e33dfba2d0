//! Runtime configuration: one TOML file covering the kinematic model, scene,
//! planner, proximity guards, task parameters and area-of-interest grids.
//! Every field has a default, so partial files override only what they name.
//! The documented schema lives in docs/config.md.

use crate::boosted::ProximityParams;
use crate::collision::SceneConfig;
use crate::kinematics::{JointConfig, KinematicModel};
use crate::rrt::PlannerParams;
use crate::task_env::{HeightMode, TaskConfig};
use crate::trajectory_db::{rotation_set, table_area, trolley_area, AreaError, AreaOfInterest};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Joint configuration the arm parks in between operations; all forward
/// supporting trajectories start here. Flange sits at (-0.30, 0, 0.40)
/// pointing straight down over the table.
pub const DEFAULT_HOME: [f64; 6] = [
    -0.57814338015565259,
    -2.35611800916355296,
    2.47501131125391050,
    -1.68968962888525454,
    -1.57079632679489656,
    0.99265294663924386,
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Area(#[from] AreaError),
}

/// Area-of-interest grids described compactly; rotation sets expand from a
/// yaw count and a list of downward pitch tilts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AreasConfig {
    pub trolley_grid: [u32; 3],
    pub trolley_cell: f64,
    pub trolley_yaw_count: u32,
    pub trolley_pitches_deg: Vec<f64>,
    pub table_grid: [u32; 3],
    pub table_cell: f64,
    pub table_yaw_count: u32,
}

impl Default for AreasConfig {
    fn default() -> Self {
        Self {
            trolley_grid: [8, 12, 10],
            trolley_cell: 0.055,
            trolley_yaw_count: 8,
            trolley_pitches_deg: vec![0.0, 15.0, 30.0],
            table_grid: [4, 4, 1],
            table_cell: 0.188,
            table_yaw_count: 8,
        }
    }
}

impl AreasConfig {
    /// Reduced grids sized for desk-scale runs: the trolley at 4x6x5 cells
    /// of 10 cm with 8 straight-down yaws, the stock table patch.
    pub fn desk() -> Self {
        Self {
            trolley_grid: [4, 6, 5],
            trolley_cell: 0.1,
            trolley_yaw_count: 8,
            trolley_pitches_deg: vec![0.0],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub model: KinematicModel,
    pub scene: SceneConfig,
    pub planner: PlannerParams,
    pub proximity: ProximityParams,
    pub task: TaskConfig,
    pub areas: AreasConfig,
    pub heights: HeightMode,
    pub home: [f64; 6],
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            model: KinematicModel::ur10(),
            scene: SceneConfig::default(),
            planner: PlannerParams::default(),
            proximity: ProximityParams::default(),
            task: TaskConfig::default(),
            areas: AreasConfig::default(),
            heights: HeightMode::default(),
            home: DEFAULT_HOME,
        }
    }
}

impl Config {
    /// Desk-scale preset: reduced grids and a tighter iteration budget so
    /// provably blocked cells fail fast during generation.
    pub fn desk() -> Self {
        Self {
            areas: AreasConfig::desk(),
            planner: PlannerParams { max_iterations: 20_000, ..PlannerParams::default() },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scene.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.planner.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.task.reward.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.home.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::Invalid("home configuration must be finite".into()));
        }
        Ok(())
    }

    pub fn home_config(&self) -> JointConfig {
        JointConfig::new(self.home)
    }

    pub fn build_areas(&self) -> Result<Vec<AreaOfInterest>, ConfigError> {
        let a = &self.areas;
        let trolley_rot = rotation_set(
            a.trolley_yaw_count,
            &a.trolley_pitches_deg.iter().map(|d| d.to_radians()).collect::<Vec<_>>(),
        );
        let table_rot = rotation_set(a.table_yaw_count, &[0.0]);
        Ok(vec![
            trolley_area(&self.scene, a.trolley_grid, a.trolley_cell, trolley_rot)?,
            table_area(&self.scene, a.table_grid, a.table_cell, table_rot)?,
        ])
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        crate::trajectory_db::world_fingerprint(&self.model, &self.scene)
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_overrides_named_fields_only() {
        let text = r#"
            seed = 9
            [scene]
            trolley_floor_z = -0.40
            [planner]
            shortcut_passes = 40
        "#;
        let cfg: Config = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scene.trolley_floor_z, -0.40);
        assert_eq!(cfg.planner.shortcut_passes, 40);
        assert_eq!(cfg.planner.step, 0.1);
        assert_eq!(cfg.home, DEFAULT_HOME);
    }

    #[test]
    fn desk_preset_shrinks_trolley_grid() {
        let cfg = Config::desk();
        assert_eq!(cfg.areas.trolley_grid, [4, 6, 5]);
        let areas = cfg.build_areas().unwrap();
        assert_eq!(areas[0].cell_count(), 120);
        assert_eq!(areas[0].rotations.len(), 8);
        assert_eq!(areas[1].cell_count(), 16);
    }
}
