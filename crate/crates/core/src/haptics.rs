//! Force sensing and feedback chain.
//!
//! The FSR is modelled with conductance proportional to force, so feeding it
//! into the inverting current-to-voltage stage `V_out = -V_ref * R_g / R`
//! yields an output voltage linear in force. The normalized reading is
//! `|V_out|` over the full-compression magnitude `V_ref * R_g / R_fs`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HapticsError {
    #[error("force must be non-negative, got {0} N")]
    NegativeForce(f64),
    #[error("resistance must be positive, got {0} ohm")]
    NonPositiveResistance(f64),
    #[error("output {v_out} V exceeds full scale {full_scale} V")]
    OverRange { v_out: f64, full_scale: f64 },
    #[error("normalized force {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid haptics parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Force-sensitive resistor characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrModel {
    /// Resistance at full compression (ohm).
    pub r_fs: f64,
    /// Force at which full compression is reached (N).
    pub f_max: f64,
}

impl Default for FsrModel {
    fn default() -> Self {
        Self {
            r_fs: 1000.0,
            f_max: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizerConfig {
    /// Reference voltage (V).
    pub v_ref: f64,
    /// Feedback (gain) resistor (ohm).
    pub r_g: f64,
}

impl Default for LinearizerConfig {
    fn default() -> Self {
        Self {
            v_ref: 3.3,
            r_g: 1000.0,
        }
    }
}

impl LinearizerConfig {
    /// `|V_out|` at full compression of `m`.
    pub fn full_scale(&self, m: &FsrModel) -> f64 {
        self.v_ref * self.r_g / m.r_fs
    }
}

/// Sensor resistance; `Open` when nothing presses the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resistance {
    Open,
    Ohms(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceSample {
    pub force_n: f64,
    pub v_out: f64,
    pub normalized: f64,
}

/// Equal and opposite torques on the two actuation sticks (N*m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorqueCommand {
    pub stick_a: f64,
    pub stick_b: f64,
}

pub fn force_to_resistance(f: f64, m: &FsrModel) -> Result<Resistance, HapticsError> {
    if !(f >= 0.0) {
        return Err(HapticsError::NegativeForce(f));
    }
    Ok(if f == 0.0 {
        Resistance::Open
    } else if f >= m.f_max {
        Resistance::Ohms(m.r_fs)
    } else {
        Resistance::Ohms(m.r_fs * m.f_max / f)
    })
}

pub fn linearize(r: Resistance, cfg: &LinearizerConfig) -> Result<f64, HapticsError> {
    match r {
        Resistance::Open => Ok(0.0),
        Resistance::Ohms(ohms) if ohms > 0.0 => Ok(-cfg.v_ref * cfg.r_g / ohms),
        Resistance::Ohms(ohms) => Err(HapticsError::NonPositiveResistance(ohms)),
    }
}

/// Relative slack allowed above full scale before reporting `OverRange`.
const FULL_SCALE_SLACK: f64 = 1e-9;

pub fn normalize_force(v_out: f64, cfg: &LinearizerConfig, m: &FsrModel) -> Result<f64, HapticsError> {
    let full_scale = cfg.full_scale(m);
    let mag = v_out.abs();
    if !(mag <= full_scale * (1.0 + FULL_SCALE_SLACK)) {
        return Err(HapticsError::OverRange { v_out, full_scale });
    }
    Ok((mag / full_scale).clamp(0.0, 1.0))
}

/// Gain resistor giving `|V_out| = v_target` at full compression.
pub fn select_gain_resistor(m: &FsrModel, v_target: f64, v_ref: f64) -> Result<f64, HapticsError> {
    if !(v_target > 0.0) {
        return Err(HapticsError::InvalidParameter {
            name: "v_target",
            value: v_target,
        });
    }
    if !(v_ref > 0.0) {
        return Err(HapticsError::InvalidParameter {
            name: "v_ref",
            value: v_ref,
        });
    }
    Ok(v_target * m.r_fs / v_ref)
}

pub fn feedback_torque(normalized_force: f64, k_t: f64) -> Result<TorqueCommand, HapticsError> {
    if !(0.0..=1.0).contains(&normalized_force) {
        return Err(HapticsError::OutOfRange(normalized_force));
    }
    let stick_a = k_t * normalized_force;
    Ok(TorqueCommand {
        stick_a,
        stick_b: -stick_a,
    })
}

/// All haptics constants in one place; the config file uses these key names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticsConfig {
    pub v_ref: f64,
    pub r_g: f64,
    pub r_fs: f64,
    pub f_max: f64,
    /// Torque at full-scale force (N*m).
    pub k_t: f64,
}

impl Default for HapticsConfig {
    fn default() -> Self {
        let fsr = FsrModel::default();
        let lin = LinearizerConfig::default();
        Self {
            v_ref: lin.v_ref,
            r_g: lin.r_g,
            r_fs: fsr.r_fs,
            f_max: fsr.f_max,
            k_t: 0.2,
        }
    }
}

impl HapticsConfig {
    pub fn validate(&self) -> Result<(), HapticsError> {
        for (name, value) in [
            ("v_ref", self.v_ref),
            ("r_g", self.r_g),
            ("r_fs", self.r_fs),
            ("f_max", self.f_max),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(HapticsError::InvalidParameter { name, value });
            }
        }
        if !self.k_t.is_finite() {
            return Err(HapticsError::InvalidParameter {
                name: "k_t",
                value: self.k_t,
            });
        }
        Ok(())
    }

    pub fn fsr(&self) -> FsrModel {
        FsrModel {
            r_fs: self.r_fs,
            f_max: self.f_max,
        }
    }

    pub fn linearizer(&self) -> LinearizerConfig {
        LinearizerConfig {
            v_ref: self.v_ref,
            r_g: self.r_g,
        }
    }

    /// Runs a sensor force through resistance, linearizer and normalization.
    pub fn sample(&self, force_n: f64) -> Result<ForceSample, HapticsError> {
        let fsr = self.fsr();
        let lin = self.linearizer();
        let v_out = linearize(force_to_resistance(force_n, &fsr)?, &lin)?;
        let normalized = normalize_force(v_out, &lin, &fsr)?;
        Ok(ForceSample {
            force_n,
            v_out,
            normalized,
        })
    }

    pub fn torque(&self, normalized: f64) -> Result<TorqueCommand, HapticsError> {
        feedback_torque(normalized, self.k_t)
    }
}
