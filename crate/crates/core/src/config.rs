//! Top-level configuration file.
//!
//! Plain `key = value` text with optional `[section]` headers:
//!
//! ```text
//! [server]
//! control_hz = 100
//! [haptics]
//! v_ref = 3.3
//! r_g = 1000
//! [objects.tomato]
//! free_size = 60
//! ...
//! ```
//!
//! Missing keys take their defaults; object sections are merged over the
//! built-in presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DEFAULT_A_MAX;
use crate::frames::FramesError;
use crate::gripper::{GripperConfig, GripperError, ObjectModel, PolicyConfig};
use crate::haptics::{HapticsConfig, HapticsError};
use crate::kinematics::{DhTable, KinematicsError};
use crate::server::ServerConfig;

/// Environment variable that overrides the configuration path.
pub const CONFIG_ENV: &str = "PROMETHEUS_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Haptics(#[from] HapticsError),
    #[error(transparent)]
    Gripper(#[from] GripperError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Frames(#[from] FramesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Per-dimension action scale: six joints (rad/step) then gripper (mm/step).
    pub a_max: [f64; 7],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { a_max: DEFAULT_A_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub haptics: HapticsConfig,
    pub gripper: GripperConfig,
    pub policy: PolicyConfig,
    pub dataset: DatasetConfig,
    pub objects: BTreeMap<String, ObjectModel>,
    /// DH table file; the built-in UR3 table when absent.
    pub dh_file: Option<PathBuf>,
    /// Calibration pairs file; identity operator mapping when absent.
    pub calibration_file: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut merged = ObjectModel::presets();
        for (name, mut obj) in std::mem::take(&mut cfg.objects) {
            if obj.name.is_empty() {
                obj.name = name.clone();
            }
            merged.insert(name, obj);
        }
        cfg.objects = merged;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        // Relative file references resolve against the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dh_file, &mut cfg.calibration_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Loads from `explicit`, else from `$PROMETHEUS_CONFIG`, else defaults.
    /// The environment variable wins over `explicit` when both are set.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match from_env.as_deref().or(explicit) {
            Some(path) => Self::load(path),
            None => Ok(Self::defaults()),
        }
    }

    /// Built-in defaults including the object presets.
    pub fn defaults() -> Self {
        Self {
            objects: ObjectModel::presets(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.haptics.validate()?;
        self.server.validate().map_err(ConfigError::Invalid)?;
        for obj in self.objects.values() {
            obj.validate()?;
        }
        if self.dataset.a_max.iter().any(|a| !(*a > 0.0)) {
            return Err(ConfigError::Invalid("dataset.a_max entries must be positive".into()));
        }
        if !(self.gripper.stroke > 0.0) || !(self.gripper.max_speed > 0.0) {
            return Err(ConfigError::Invalid(
                "gripper stroke and max_speed must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Result<ObjectModel, GripperError> {
        self.objects
            .get(name)
            .cloned()
            .ok_or_else(|| GripperError::UnknownObject(name.to_string()))
    }

    pub fn dh_table(&self) -> Result<DhTable, ConfigError> {
        match &self.dh_file {
            Some(p) => Ok(DhTable::load(p)?),
            None => Ok(DhTable::ur3()),
        }
    }
}
