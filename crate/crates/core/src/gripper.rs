//! Parallel gripper with a force-sensing finger pad, quasi-static contact
//! against width-only object models, grasp outcome labelling and the two
//! scripted grasp policies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity (m/s^2).
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum GripperError {
    #[error("contact position {pos} mm outside pad [0, {len}] mm")]
    OutOfPadRange { pos: f64, len: f64 },
    #[error("applied force must be non-negative, got {0} N")]
    NegativeForce(f64),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("invalid object {name:?}: {reason}")]
    InvalidObject { name: String, reason: String },
    #[error("unknown object preset {0:?}")]
    UnknownObject(String),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("object file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spring-loaded pad that presses a central rod onto the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadMechanism {
    /// Stiffness of each return spring (N/mm).
    pub spring_k: f64,
    pub spring_count: u32,
    /// Spring force holding the pad off the sensor at rest (N).
    pub preload_f: f64,
    /// Pad length along the finger (mm).
    pub pad_length: f64,
}

impl Default for PadMechanism {
    fn default() -> Self {
        Self {
            spring_k: 0.5,
            spring_count: 2,
            preload_f: 0.5,
            pad_length: 40.0,
        }
    }
}

impl PadMechanism {
    pub fn transfer(&self, applied_f: f64, contact_pos: f64) -> Result<f64, GripperError> {
        pad_transfer(applied_f, contact_pos, self)
    }
}

/// Force reaching the sensor for a load anywhere along the pad.
///
/// The rod sits under the pad's centre and the guide screws keep the pad
/// parallel, so the position only matters for the range check.
pub fn pad_transfer(applied_f: f64, contact_pos: f64, mech: &PadMechanism) -> Result<f64, GripperError> {
    if !(0.0..=mech.pad_length).contains(&contact_pos) {
        return Err(GripperError::OutOfPadRange {
            pos: contact_pos,
            len: mech.pad_length,
        });
    }
    if !(applied_f >= 0.0) {
        return Err(GripperError::NegativeForce(applied_f));
    }
    Ok((applied_f - mech.preload_f).max(0.0))
}

mod infinite_as_none {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        let opt = if v.is_finite() { Some(*v) } else { None };
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

/// Width-only object with linear stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectModel {
    #[serde(default)]
    pub name: String,
    /// Undeformed width (mm).
    pub free_size: f64,
    /// N/mm.
    pub stiffness: f64,
    /// Contact force that deforms the object irreversibly (N); infinite when
    /// the object is not fragile.
    #[serde(default = "infinite", with = "infinite_as_none")]
    pub damage_threshold: f64,
    /// kg.
    pub mass: f64,
    pub friction_mu: f64,
    /// Half-width of the uniform per-episode variation of `free_size` (mm).
    #[serde(default)]
    pub size_jitter_mm: f64,
}

impl ObjectModel {
    pub fn validate(&self) -> Result<(), GripperError> {
        let bad = |reason: &str| {
            Err(GripperError::InvalidObject {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.free_size > 0.0 && self.free_size.is_finite()) {
            return bad("free_size must be positive");
        }
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return bad("stiffness must be positive");
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass must be positive");
        }
        if !(self.friction_mu > 0.0 && self.friction_mu <= 2.0) {
            return bad("friction_mu must be in (0, 2]");
        }
        if !(self.damage_threshold > 0.0) {
            return bad("damage_threshold must be positive");
        }
        if !(self.size_jitter_mm >= 0.0 && self.size_jitter_mm < self.free_size) {
            return bad("size_jitter_mm must be in [0, free_size)");
        }
        Ok(())
    }

    /// Smallest two-finger squeeze that holds the object against gravity (N).
    pub fn min_holding_force(&self) -> f64 {
        self.mass * GRAVITY / (2.0 * self.friction_mu)
    }

    /// Hooke contact force for a given gripper opening (N).
    pub fn contact_force(&self, opening: f64) -> f64 {
        if opening < self.free_size {
            self.stiffness * (self.free_size - opening)
        } else {
            0.0
        }
    }

    pub fn is_fragile(&self) -> bool {
        self.damage_threshold.is_finite()
    }

    pub fn tomato() -> Self {
        Self {
            name: "tomato".into(),
            free_size: 60.0,
            stiffness: 0.8,
            damage_threshold: 8.0,
            mass: 0.12,
            friction_mu: 0.6,
            size_jitter_mm: 5.0,
        }
    }

    pub fn shampoo() -> Self {
        Self {
            name: "shampoo".into(),
            free_size: 55.0,
            stiffness: 20.0,
            damage_threshold: f64::INFINITY,
            mass: 0.45,
            friction_mu: 0.5,
            size_jitter_mm: 0.0,
        }
    }

    pub fn toothpaste() -> Self {
        Self {
            name: "toothpaste".into(),
            free_size: 35.0,
            stiffness: 0.3,
            damage_threshold: f64::INFINITY,
            mass: 0.08,
            friction_mu: 0.6,
            size_jitter_mm: 0.0,
        }
    }

    /// The shell survives about 30 N, but the pad's small contact patch
    /// cracks it at roughly 6 N, which is the threshold used.
    pub fn egg() -> Self {
        Self {
            name: "egg".into(),
            free_size: 45.0,
            stiffness: 15.0,
            damage_threshold: 6.0,
            mass: 0.06,
            friction_mu: 0.4,
            size_jitter_mm: 0.0,
        }
    }

    pub fn presets() -> BTreeMap<String, ObjectModel> {
        [Self::tomato(), Self::shampoo(), Self::toothpaste(), Self::egg()]
            .into_iter()
            .map(|o| (o.name.clone(), o))
            .collect()
    }

    pub fn preset(name: &str) -> Result<ObjectModel, GripperError> {
        Self::presets()
            .remove(name)
            .ok_or_else(|| GripperError::UnknownObject(name.to_string()))
    }
}

/// Parses object presets from `[name]` sections of `key = value` lines.
/// A missing `damage_threshold` means the object is not fragile.
pub fn parse_objects(text: &str) -> Result<BTreeMap<String, ObjectModel>, GripperError> {
    let mut objects: BTreeMap<String, ObjectModel> =
        toml::from_str(text).map_err(|e| GripperError::Parse(e.to_string()))?;
    for (name, obj) in objects.iter_mut() {
        if obj.name.is_empty() {
            obj.name = name.clone();
        }
        obj.validate()?;
    }
    Ok(objects)
}

pub fn load_objects(path: impl AsRef<Path>) -> Result<BTreeMap<String, ObjectModel>, GripperError> {
    parse_objects(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperConfig {
    /// Full opening (mm).
    pub stroke: f64,
    /// Finger closing/opening speed limit (mm/s).
    pub max_speed: f64,
    pub pad: PadMechanism,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            stroke: 85.0,
            max_speed: 150.0,
            pad: PadMechanism::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// mm, always within `[0, stroke]`.
    pub opening: f64,
    pub commanded_opening: f64,
    pub stroke: f64,
    /// Force between fingers and object (N).
    pub contact_force: f64,
}

impl GripperState {
    pub fn open(stroke: f64) -> Self {
        Self {
            opening: stroke,
            commanded_opening: stroke,
            stroke,
            contact_force: 0.0,
        }
    }

    pub fn command(&mut self, target_mm: f64) {
        self.commanded_opening = if target_mm.is_finite() {
            target_mm.clamp(0.0, self.stroke)
        } else {
            self.commanded_opening
        };
    }

    pub fn normalized_opening(&self) -> f64 {
        (self.opening / self.stroke).clamp(0.0, 1.0)
    }
}

/// Advances the fingers toward the command by at most `max_speed * dt` and
/// evaluates contact. Returns the new state and the force seen by the sensor.
pub fn contact_step(g: &GripperState, obj: &ObjectModel, dt: f64, cfg: &GripperConfig) -> (GripperState, f64) {
    let mut next = *g;
    let max_step = cfg.max_speed * dt.max(0.0);
    let commanded = g.commanded_opening.clamp(0.0, g.stroke);
    let delta = (commanded - g.opening).clamp(-max_step, max_step);
    next.commanded_opening = commanded;
    next.opening = (g.opening + delta).clamp(0.0, g.stroke);
    next.contact_force = obj.contact_force(next.opening);
    let sensor = pad_transfer(next.contact_force, cfg.pad.pad_length / 2.0, &cfg.pad)
        .expect("centre of pad with non-negative force");
    (next, sensor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLabel {
    Success,
    Slip,
    Damage,
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeLabel::Success => "success",
            OutcomeLabel::Slip => "slip",
            OutcomeLabel::Damage => "damage",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub label: OutcomeLabel,
    /// Peak contact force over the trace (N).
    pub peak_force: f64,
    pub at_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    /// Contact force (N).
    pub force: f64,
    pub opening: f64,
    pub lifted: bool,
}

/// Damage if the force ever exceeds the damage threshold, slip if the force
/// at the first lifted step is below the friction minimum, success otherwise.
pub fn classify_outcome(trace: &[TracePoint], obj: &ObjectModel) -> Result<GraspOutcome, GripperError> {
    if trace.is_empty() {
        return Err(GripperError::EmptyTrace);
    }
    let peak_force = trace.iter().map(|p| p.force).fold(0.0, f64::max);
    if let Some(at_step) = trace.iter().position(|p| p.force > obj.damage_threshold) {
        return Ok(GraspOutcome {
            label: OutcomeLabel::Damage,
            peak_force,
            at_step,
        });
    }
    if let Some(at_step) = trace.iter().position(|p| p.lifted) {
        let label = if trace[at_step].force < obj.min_holding_force() {
            OutcomeLabel::Slip
        } else {
            OutcomeLabel::Success
        };
        return Ok(GraspOutcome {
            label,
            peak_force,
            at_step,
        });
    }
    Ok(GraspOutcome {
        label: OutcomeLabel::Success,
        peak_force,
        at_step: trace.len() - 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Closes to a fixed opening regardless of force.
    PositionOnly,
    /// Closes until the normalized force reaches a cap, then holds.
    ForceCapped,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::PositionOnly => "position_only",
            PolicyKind::ForceCapped => "force_capped",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = GripperError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "position_only" => Ok(PolicyKind::PositionOnly),
            "force_capped" => Ok(PolicyKind::ForceCapped),
            other => Err(GripperError::UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Target opening of the position-only policy (mm).
    pub position_target_mm: f64,
    /// Force cap as a multiple of the object's minimum holding force.
    pub cap_factor: f64,
    /// Commanded closing speed far from the object (mm/s).
    pub closing_speed: f64,
    /// Commanded closing speed near the object (mm/s).
    pub approach_speed: f64,
    /// Distance above the nominal object width where the slow phase starts (mm).
    pub approach_margin: f64,
    /// Ticks to hold a settled grasp before asking for the lift.
    pub settle_ticks: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            position_target_mm: 30.0,
            cap_factor: 1.1,
            closing_speed: 40.0,
            approach_speed: 10.0,
            approach_margin: 8.0,
            settle_ticks: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperObservation {
    pub opening: f64,
    pub normalized_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyCommand {
    pub target_opening: Option<f64>,
    pub ready_to_lift: bool,
}

/// Per-tick gripper decision maker used by scripted episodes.
pub trait GripperPolicy {
    fn step(&mut self, obs: &GripperObservation, dt: f64) -> PolicyCommand;
}

/// Never issues a command.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl GripperPolicy for IdlePolicy {
    fn step(&mut self, _obs: &GripperObservation, _dt: f64) -> PolicyCommand {
        PolicyCommand::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Closing,
    Holding { opening: f64, ticks: u32 },
}

#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    kind: PolicyKind,
    cfg: PolicyConfig,
    /// Normalized-force cap for `ForceCapped`.
    cap: f64,
    slow_below: f64,
    commanded: Option<f64>,
    phase: Phase,
}

impl ScriptedPolicy {
    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Normalized force at which `ForceCapped` stops closing.
    pub fn cap(&self) -> f64 {
        self.cap
    }
}

/// Builds the scripted stand-in for a human operator with (`ForceCapped`) or
/// without (`PositionOnly`) force feedback. `f_max` is the sensor full scale.
pub fn scripted_policy(kind: PolicyKind, obj: &ObjectModel, cfg: &PolicyConfig, f_max: f64) -> ScriptedPolicy {
    ScriptedPolicy {
        kind,
        cfg: *cfg,
        cap: (cfg.cap_factor * obj.min_holding_force() / f_max).min(1.0),
        slow_below: obj.free_size + cfg.approach_margin,
        commanded: None,
        phase: Phase::Closing,
    }
}

impl GripperPolicy for ScriptedPolicy {
    fn step(&mut self, obs: &GripperObservation, dt: f64) -> PolicyCommand {
        let commanded = *self.commanded.get_or_insert(obs.opening);
        if let Phase::Holding { opening, ticks } = self.phase {
            let ticks = ticks + 1;
            self.phase = Phase::Holding { opening, ticks };
            return PolicyCommand {
                target_opening: Some(opening),
                ready_to_lift: ticks >= self.cfg.settle_ticks,
            };
        }
        match self.kind {
            PolicyKind::PositionOnly => {
                let target = self.cfg.position_target_mm;
                if (obs.opening - target).abs() <= 1e-9 {
                    self.phase = Phase::Holding {
                        opening: target,
                        ticks: 0,
                    };
                    return PolicyCommand {
                        target_opening: Some(target),
                        ready_to_lift: self.cfg.settle_ticks == 0,
                    };
                }
                let step = self.cfg.closing_speed * dt;
                let next = if commanded > target {
                    (commanded - step).max(target)
                } else {
                    (commanded + step).min(target)
                };
                self.commanded = Some(next);
                PolicyCommand {
                    target_opening: Some(next),
                    ready_to_lift: false,
                }
            }
            PolicyKind::ForceCapped => {
                if obs.normalized_force >= self.cap {
                    self.phase = Phase::Holding {
                        opening: obs.opening,
                        ticks: 0,
                    };
                    self.commanded = Some(obs.opening);
                    return PolicyCommand {
                        target_opening: Some(obs.opening),
                        ready_to_lift: self.cfg.settle_ticks == 0,
                    };
                }
                let next = if commanded > self.slow_below {
                    (commanded - self.cfg.closing_speed * dt).max(self.slow_below)
                } else {
                    commanded - self.cfg.approach_speed * dt
                }
                .max(0.0);
                self.commanded = Some(next);
                PolicyCommand {
                    target_opening: Some(next),
                    ready_to_lift: false,
                }
            }
        }
    }
}
