use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wakesteer::calibration::CalibrationConfig;
use wakesteer::farm::ProfileShape;
use wakesteer::optimizer::{OptimizerConfig, DEFAULT_ACTIVE_WINDOW};
use wakesteer::synthetic::{NoiseModel, WindProcess, YawControllerModel};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub farm: FarmConfig,
    pub simulate: SimulateConfig,
    pub calibrate: CalibrateConfig,
    pub table: TableConfig,
    pub optimize: OptimizeConfig,
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarmConfig {
    /// Layout CSV; the built-in four-turbine site when absent.
    pub layout: Option<PathBuf>,
    /// Blade sections CSV; a generic blade when absent.
    pub blade: Option<PathBuf>,
    pub blade_count: usize,
    pub hub_radius_m: f64,
    pub shape: ProfileShape,
    pub max_yaw_deg: f64,
    pub yaw_step_deg: f64,
}

impl Default for FarmConfig {
    fn default() -> Self {
        FarmConfig {
            layout: None,
            blade: None,
            blade_count: 3,
            hub_radius_m: 3.0,
            shape: ProfileShape::default(),
            max_yaw_deg: 90.0,
            yaw_step_deg: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Baseline,
    Fixed,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub duration_minutes: usize,
    pub control: ControlKind,
    /// Turbine stepped through the fixed staircase.
    pub fixed_turbine: u32,
    /// Lookup table for `control = "table"`; `lut.csv` in the output
    /// directory when absent.
    pub table: Option<PathBuf>,
    /// Hidden wake spreading rate of the synthetic farm.
    pub true_k_w: f64,
    pub wind: WindProcess,
    pub noise: NoiseModel,
    pub controller: YawControllerModel,
    pub toggle_period_minutes: i64,
    pub output: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            duration_minutes: 1440,
            control: ControlKind::Baseline,
            fixed_turbine: 1,
            table: None,
            true_k_w: 0.03,
            wind: WindProcess::default(),
            noise: NoiseModel::default(),
            controller: YawControllerModel::default(),
            toggle_period_minutes: 150,
            output: "scada.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub scada: Option<PathBuf>,
    pub speed_range: (f64, f64),
    pub ti_max: f64,
    pub settings: CalibrationConfig,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            scada: None,
            speed_range: (4.0, 12.0),
            ti_max: 0.2,
            settings: CalibrationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub calibration: Option<PathBuf>,
    pub active_window: (f64, f64),
    pub optimizer: OptimizerConfig,
    /// Conditions of the exported direction slice.
    pub slice_speed: f64,
    pub slice_ti: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            calibration: None,
            active_window: DEFAULT_ACTIVE_WINDOW,
            optimizer: OptimizerConfig::default(),
            slice_speed: 7.5,
            slice_ti: 0.0625,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub calibration: Option<PathBuf>,
    pub speed: f64,
    pub ti: f64,
    pub directions: Vec<f64>,
    pub optimizer: OptimizerConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            calibration: None,
            speed: 7.0,
            ti: 0.06,
            directions: (-8..=6).map(|k| 2.5 * k as f64).collect(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub scada: Option<PathBuf>,
    pub toggle_period_minutes: i64,
    pub resamples: usize,
    pub block_minutes: Option<usize>,
    /// Calibration report used for the predicted gains, if any.
    pub calibration: Option<PathBuf>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            scada: None,
            toggle_period_minutes: 150,
            resamples: 2000,
            block_minutes: None,
            calibration: None,
        }
    }
}

/// A parsed configuration with the location it was read from.
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn load(path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Loaded> {
        let (mut config, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, dir)
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        let canonical = serde_json::to_vec(&config)?;
        let hash = hex::encode(Sha256::digest(&canonical));
        Ok(Loaded {
            config,
            base_dir,
            out_dir: out.to_path_buf(),
            hash,
        })
    }

    /// Path of an input: relative paths are taken from the config file's
    /// directory, absent ones default to `default` in the output directory.
    pub fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        match given {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.base_dir.join(p),
            None => self.out_dir.join(default),
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Comment lines stamped on every CSV artifact.
    pub fn stamp(&self) -> Vec<String> {
        vec![
            format!("config_hash={}", self.hash),
            format!("seed={}", self.config.seed),
            format!("version={}", env!("CARGO_PKG_VERSION")),
        ]
    }
}
