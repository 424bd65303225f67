//! Calibration and the portal configuration file.
//!
//! The file is TOML. Every table and key is optional; missing values take
//! the defaults shown here.
//!
//! ```toml
//! [calibration]
//! mouse_factor_px = 100.0          # M
//! keyboard_factor_s_per_m = 1.0    # K
//!
//! [integration]
//! dt_policy = "timestamped"        # or "mcu-clock"
//! clock_hz = 133000000.0
//! window_s = 0.1
//! zupt_threshold = 0.1
//! bias_window = 200
//!
//! [sensitivity]
//! pixels_per_degree = 1.0
//! speed_mps = 1.0
//!
//! [world]
//! frame = "body"                   # or "world"
//! room_width_m = 10.0
//! room_depth_m = 10.0
//!
//! [bindings]
//! forward = "w"
//! backward = "s"
//! left = "a"
//! right = "d"
//!
//! [sensor]
//! accel_range = 39.2
//! synth_rate_hz = 100.0
//!
//! [service]
//! listen = "127.0.0.1:8765"
//! token = "merp"
//! snapshot_hz = 60.0
//! max_skew_ms = 100
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avatar::{GameSensitivity, Room, WorldConfig, WorldError};
use crate::hid::{HidError, KeyBindings, KeyboardFactor};
use crate::mapper::{MapperError, MouseFactor};
use crate::reckoner::{IntegrationConfig, ReckonError};
use crate::sensor::DEFAULT_ACCEL_RANGE;
use crate::synth::{AccelFrame, DEFAULT_RATE_HZ};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error(transparent)]
    Hid(#[from] HidError),
    #[error(transparent)]
    Integration(#[from] ReckonError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{0}")]
    Invalid(&'static str),
}

/// The user-side calibration: M, K and how acceleration is integrated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub mouse_factor: MouseFactor,
    pub keyboard_factor: KeyboardFactor,
    pub integration: IntegrationConfig,
}

impl CalibrationConfig {
    pub fn new(m_pixels: f64, k_seconds_per_meter: f64) -> Result<Self, ConfigError> {
        Ok(CalibrationConfig {
            mouse_factor: MouseFactor::new(m_pixels)?,
            keyboard_factor: KeyboardFactor::new(k_seconds_per_meter)?,
            integration: IntegrationConfig::default(),
        })
    }

    pub fn with_integration(mut self, integration: IntegrationConfig) -> Self {
        self.integration = integration;
        self
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig::new(100.0, 1.0).expect("defaults are valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub mouse_factor_px: f64,
    pub keyboard_factor_s_per_m: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            mouse_factor_px: 100.0,
            keyboard_factor_s_per_m: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub frame: AccelFrame,
    pub room_width_m: f64,
    pub room_depth_m: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let room = Room::default();
        WorldSection {
            frame: AccelFrame::Body,
            room_width_m: room.width,
            room_depth_m: room.depth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub accel_range: f64,
    pub synth_rate_hz: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            accel_range: DEFAULT_ACCEL_RANGE,
            synth_rate_hz: DEFAULT_RATE_HZ,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub listen: String,
    pub token: String,
    pub snapshot_hz: f64,
    pub max_skew_ms: u64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            listen: "127.0.0.1:8765".into(),
            token: "merp".into(),
            snapshot_hz: 60.0,
            max_skew_ms: 100,
        }
    }
}

/// Parsed configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortalConfig {
    pub calibration: CalibrationSection,
    pub integration: IntegrationConfig,
    pub sensitivity: GameSensitivity,
    pub world: WorldSection,
    pub bindings: KeyBindings,
    pub sensor: SensorSection,
    pub service: ServiceSection,
}

impl PortalConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PortalConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.calibration()?;
        self.sensitivity.validate()?;
        self.room().validate()?;
        if !(self.sensor.accel_range.is_finite() && self.sensor.accel_range > 0.0) {
            return Err(ConfigError::Invalid("sensor.accel_range must be positive"));
        }
        if !(self.sensor.synth_rate_hz.is_finite() && self.sensor.synth_rate_hz > 0.0) {
            return Err(ConfigError::Invalid("sensor.synth_rate_hz must be positive"));
        }
        if !(self.service.snapshot_hz.is_finite() && self.service.snapshot_hz > 0.0) {
            return Err(ConfigError::Invalid("service.snapshot_hz must be positive"));
        }
        Ok(())
    }

    pub fn calibration(&self) -> Result<CalibrationConfig, ConfigError> {
        self.integration.validate()?;
        Ok(CalibrationConfig::new(
            self.calibration.mouse_factor_px,
            self.calibration.keyboard_factor_s_per_m,
        )?
        .with_integration(self.integration))
    }

    pub fn room(&self) -> Room {
        Room {
            width: self.world.room_width_m,
            depth: self.world.room_depth_m,
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            sensitivity: self.sensitivity,
            bindings: self.bindings.clone(),
            room: self.room(),
            frame: self.world.frame,
        }
    }
}
