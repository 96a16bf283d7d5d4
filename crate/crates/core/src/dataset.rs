//! Imitation-learning trajectories: observations at the recording rate,
//! standardized delta actions, 256-bin discretization and a line-oriented
//! JSON container.
//!
//! File layout: one header object on the first line, then one step object
//! per line. The header carries the step count so truncation is detected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gripper::GraspOutcome;
use crate::server::EpisodeSetup;

pub const SCHEMA: &str = "prometheus-ds/1";
pub const ACTION_DIM: usize = 7;
pub const BINS: usize = 256;

/// 0.05 rad per joint and 5 mm of gripper travel per recorded step.
pub const DEFAULT_A_MAX: [f64; ACTION_DIM] = [0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 5.0];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("action scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("need at least two states, got {0}")]
    TooShort(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema version {found:?} is not {SCHEMA:?}")]
    SchemaVersionMismatch { found: String },
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub joints: [f64; 6],
    /// `[x, y, z, qw, qx, qy, qz]`
    pub ee_pose: [f64; 7],
    pub gripper_pos_norm: f64,
    pub force_norm: f64,
    /// Relative path of the 128x128 wrist image, if any.
    pub wrist_image_ref: Option<String>,
    /// Relative path of the 256x256 side image, if any.
    pub side_image_ref: Option<String>,
}

impl Observation {
    /// Bins of the `[0, 1]` proprioceptive channels: gripper position, force.
    pub fn proprio_bins(&self) -> Result<[BinIndex; 2], DatasetError> {
        Ok([discretize(self.gripper_pos_norm)?, discretize(self.force_norm)?])
    }
}

/// Standardized delta action, every component in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action(pub [f64; ACTION_DIM]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinIndex(pub u8);

fn check_scale(a_max: &[f64; ACTION_DIM]) -> Result<(), DatasetError> {
    match a_max.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        Some(a) => Err(DatasetError::NonPositiveScale(*a)),
        None => Ok(()),
    }
}

pub fn standardize_action(raw: &[f64; ACTION_DIM], a_max: &[f64; ACTION_DIM]) -> Result<Action, DatasetError> {
    check_scale(a_max)?;
    Ok(Action(std::array::from_fn(|i| (raw[i] / a_max[i]).clamp(-1.0, 1.0))))
}

pub fn destandardize(action: &Action, a_max: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    std::array::from_fn(|i| action.0[i] * a_max[i])
}

/// True if any component of `raw` exceeds its scale and would be clamped.
pub fn is_clamped(raw: &[f64; ACTION_DIM], a_max: &[f64; ACTION_DIM]) -> bool {
    raw.iter().zip(a_max).any(|(r, a)| r.abs() > *a)
}

pub fn discretize(v: f64) -> Result<BinIndex, DatasetError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(DatasetError::OutOfRange(v));
    }
    Ok(BinIndex(((v * BINS as f64).floor() as usize).min(BINS - 1) as u8))
}

pub fn compute_deltas(states: &[[f64; ACTION_DIM]]) -> Result<Vec<[f64; ACTION_DIM]>, DatasetError> {
    if states.len() < 2 {
        return Err(DatasetError::TooShort(states.len()));
    }
    Ok(states
        .windows(2)
        .map(|w| std::array::from_fn(|i| w[1][i] - w[0][i]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryStep {
    pub observation: Observation,
    /// Raw gripper opening (mm); with the joints this is the action state.
    pub opening_mm: f64,
    /// Absent on the final step.
    pub action: Option<Action>,
    /// The raw delta exceeded `a_max` and the action was clamped.
    #[serde(default)]
    pub clamped: bool,
}

impl TrajectoryStep {
    pub fn state(&self) -> [f64; ACTION_DIM] {
        let mut s = [0.0; ACTION_DIM];
        s[..6].copy_from_slice(&self.observation.joints);
        s[6] = self.opening_mm;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub episode_id: u64,
    pub task: String,
    pub a_max: [f64; ACTION_DIM],
    pub control_hz: u32,
    pub record_hz: u32,
    pub stroke_mm: f64,
    pub f_max: f64,
    pub outcome: Option<GraspOutcome>,
    /// Number of step lines that follow.
    pub steps: usize,
    /// Scripted setup that reproduces this episode.
    pub setup: Option<EpisodeSetup>,
}

impl Default for TrajectoryHeader {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            episode_id: 0,
            task: String::new(),
            a_max: DEFAULT_A_MAX,
            control_hz: 100,
            record_hz: 10,
            stroke_mm: 85.0,
            f_max: 20.0,
            outcome: None,
            steps: 0,
            setup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<TrajectoryStep>,
}

/// Builds a trajectory from recorded `(observation, raw state)` pairs.
pub fn assemble(
    mut header: TrajectoryHeader,
    recorded: &[(Observation, [f64; ACTION_DIM])],
) -> Result<Trajectory, DatasetError> {
    check_scale(&header.a_max)?;
    let mut steps = Vec::with_capacity(recorded.len());
    for (k, (obs, state)) in recorded.iter().enumerate() {
        let (action, clamped) = match recorded.get(k + 1) {
            Some((_, next)) => {
                let raw: [f64; ACTION_DIM] = std::array::from_fn(|i| next[i] - state[i]);
                (
                    Some(standardize_action(&raw, &header.a_max)?),
                    is_clamped(&raw, &header.a_max),
                )
            }
            None => (None, false),
        };
        steps.push(TrajectoryStep {
            observation: Observation {
                joints: std::array::from_fn(|i| state[i]),
                ..obs.clone()
            },
            opening_mm: state[6],
            action,
            clamped,
        });
    }
    header.steps = steps.len();
    Ok(Trajectory { header, steps })
}

impl Trajectory {
    pub fn states(&self) -> Vec<[f64; ACTION_DIM]> {
        self.steps.iter().map(TrajectoryStep::state).collect()
    }

    /// Replays destandardized actions from the first state.
    pub fn reconstruct(&self) -> Vec<[f64; ACTION_DIM]> {
        let mut out = Vec::with_capacity(self.steps.len());
        let Some(first) = self.steps.first() else {
            return out;
        };
        let mut s = first.state();
        out.push(s);
        for step in &self.steps[..self.steps.len() - 1] {
            let d = step
                .action
                .as_ref()
                .map(|a| destandardize(a, &self.header.a_max))
                .unwrap_or([0.0; ACTION_DIM]);
            for i in 0..ACTION_DIM {
                s[i] += d[i];
            }
            out.push(s);
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = self.header.clone();
        header.steps = self.steps.len();
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for step in &self.steps {
            serde_json::to_writer(&mut w, step)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut lines = r.lines();
        let corrupt = |line: usize, reason: String| DatasetError::CorruptRecord { line, reason };
        let first = match lines.next() {
            Some(Ok(l)) => l,
            Some(Err(e)) => return Err(corrupt(1, e.to_string())),
            None => return Err(corrupt(1, "empty file".into())),
        };
        let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
        match raw.get("schema").and_then(|s| s.as_str()) {
            Some(SCHEMA) => {}
            Some(other) => {
                return Err(DatasetError::SchemaVersionMismatch {
                    found: other.to_string(),
                })
            }
            None => return Err(corrupt(1, "missing schema".into())),
        }
        let header: TrajectoryHeader = serde_json::from_value(raw).map_err(|e| corrupt(1, e.to_string()))?;
        let mut steps = Vec::with_capacity(header.steps);
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let line = line.map_err(|e| corrupt(n, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let step: TrajectoryStep = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
            steps.push(step);
        }
        if steps.len() != header.steps {
            return Err(corrupt(
                steps.len() + 2,
                format!("expected {} steps, found {}", header.steps, steps.len()),
            ));
        }
        Ok(Trajectory { header, steps })
    }
}

pub fn export(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    traj.write_to(BufWriter::new(file)).map_err(io_err(path))
}

pub fn import(path: impl AsRef<Path>) -> Result<Trajectory, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    Trajectory::read_from(BufReader::new(file))
}
