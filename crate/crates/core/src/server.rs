//! The control pipeline: operator input -> frame mapping -> workspace clamp
//! -> inverse kinematics -> branch selection -> velocity clamp -> gripper
//! contact -> force chain -> stick torques, one call per control tick.
//!
//! Scripted episodes drive the same pipeline from a [`GripperPolicy`] and a
//! fixed approach/grasp/lift arm script, using simulated time only.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::dataset::{self, DatasetError, Observation, Trajectory, TrajectoryHeader};
use crate::frames::{clutch_step, ClutchState, FrameTransform, TrackerSample, WorkspaceBall};
use crate::gripper::{
    classify_outcome, contact_step, scripted_policy, GraspOutcome, GripperConfig, GripperError, GripperObservation,
    GripperPolicy, GripperState, ObjectModel, PolicyConfig, PolicyKind, TracePoint,
};
use crate::haptics::{ForceSample, HapticsConfig, TorqueCommand};
use crate::kinematics::{
    forward_kinematics, select_solution_index, DhTable, JointLimits, JointVector, KinematicsError, Pose,
    SelectionWeights, UrSolver, JOINTS,
};
use crate::wire::{encode, FrameParser, MessageBody};

/// EE rise above the grasp height that counts as lifted (m).
const LIFT_DETECT: f64 = 5e-4;
/// EE position tolerance for reaching a scripted waypoint (m).
const WAYPOINT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("episode timed out after {ticks} ticks")]
    Timeout { ticks: u64, reports: Vec<TickReport> },
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Gripper(#[from] GripperError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Wall-clock paced, driven by an operator client.
    Live,
    /// Re-simulation of a recorded episode.
    Replay,
    /// Simulated time, driven by a scripted policy.
    #[default]
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub control_hz: u32,
    /// Every n-th tick is a recording tick.
    pub record_decimation: u32,
    /// rad/s, applied per joint.
    pub max_joint_vel: f64,
    /// Radius of the workspace ball about the home tool position (m).
    pub workspace_radius: f64,
    pub mode: Mode,
    /// Episode length limit.
    pub max_ticks: u64,
    /// Every n-th tick publishes telemetry in live sessions.
    pub telemetry_decimation: u32,
    pub home_joints: [f64; JOINTS],
    /// Scripted tool speed (m/s).
    pub ee_speed: f64,
    /// Scripted descent from home to the grasp height (m).
    pub approach_depth: f64,
    /// Lift height that completes an episode (m).
    pub lift_height: f64,
    /// Radius of the half-disc in which scripted objects are placed (m).
    pub placement_radius: f64,
    /// Encoder ticks per millimetre of commanded gripper opening.
    pub encoder_ticks_per_mm: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            control_hz: 100,
            record_decimation: 10,
            max_joint_vel: 1.0,
            workspace_radius: 0.30,
            mode: Mode::Scripted,
            max_ticks: 3000,
            telemetry_decimation: 4,
            home_joints: [0.0, -PI / 2.0, PI / 2.0, -PI / 2.0, -PI / 2.0, 0.0],
            ee_speed: 0.05,
            approach_depth: 0.05,
            lift_height: 0.10,
            placement_radius: 0.10,
            encoder_ticks_per_mm: 100.0,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.control_hz == 0 || self.record_decimation == 0 || self.telemetry_decimation == 0 {
            return Err("control_hz, record_decimation and telemetry_decimation must be positive".into());
        }
        if !self.control_hz.is_multiple_of(self.record_decimation) {
            return Err(format!(
                "record_decimation {} must divide control_hz {}",
                self.record_decimation, self.control_hz
            ));
        }
        for (name, v) in [
            ("max_joint_vel", self.max_joint_vel),
            ("workspace_radius", self.workspace_radius),
            ("ee_speed", self.ee_speed),
            ("lift_height", self.lift_height),
            ("encoder_ticks_per_mm", self.encoder_ticks_per_mm),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.approach_depth >= 0.0) || !(self.placement_radius >= 0.0) {
            return Err("approach_depth and placement_radius must be non-negative".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    pub fn record_hz(&self) -> u32 {
        self.control_hz / self.record_decimation
    }

    /// Simulated time of tick `k` (s).
    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / self.control_hz as f64
    }

    pub fn is_recording_tick(&self, tick: u64) -> bool {
        tick.is_multiple_of(self.record_decimation as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// The commanded pose was projected onto the workspace ball.
    Clamp,
    /// Some IK branches were dropped as wrist-singular.
    Singular,
    /// No usable IK branch; joints held.
    Unreachable,
    /// The joint step was scaled down to the velocity limit.
    VelocityClamp,
    Damage,
    Slip,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Clamp => "clamp",
            Event::Singular => "singular",
            Event::Unreachable => "unreachable",
            Event::VelocityClamp => "velocity_clamp",
            Event::Damage => "damage",
            Event::Slip => "slip",
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pose part of a tick input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseInput {
    /// Absolute tracker reading in the operator frame.
    Tracker(TrackerSample),
    /// Relative motion of the operator's hand: translation (m) and
    /// roll/pitch/yaw increments (rad) in the operator frame.
    OperatorDelta {
        translation: Vector3<f64>,
        rotation: Vector3<f64>,
    },
    /// Tool pose in the robot base frame, bypassing the clutch.
    Robot(Pose),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickInput {
    pub pose: Option<PoseInput>,
    pub clutch: Option<bool>,
    pub gripper_target_mm: Option<f64>,
}

impl TickInput {
    pub fn robot(pose: Pose) -> Self {
        Self {
            pose: Some(PoseInput::Robot(pose)),
            ..Self::default()
        }
    }
}

/// Host-side view of the board link for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HostTelemetry {
    pub force_norm_milli: u16,
    pub encoder_ticks: i32,
    pub seq: u16,
    pub torque_mnm: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    /// Simulated time `tick / control_hz` (s).
    pub time: f64,
    pub recording: bool,
    pub joints: JointVector,
    pub ee_pose: Pose,
    pub opening_mm: f64,
    pub contact_force: f64,
    pub force: ForceSample,
    pub torque: TorqueCommand,
    pub lifted: bool,
    pub host: HostTelemetry,
    pub events: Vec<Event>,
}

/// Emulated sensor-board -> motor-board (RS-485) and motor-board -> host
/// (USB) links. Each tick's data crosses both links as framed bytes.
#[derive(Debug, Clone, Default)]
pub struct BoardLink {
    rs485: FrameParser,
    usb: FrameParser,
    seq: u16,
    last: HostTelemetry,
}

impl BoardLink {
    fn exchange(&mut self, sample: &ForceSample, haptics: &HapticsConfig, encoder_ticks: i32) -> HostTelemetry {
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        let raw_mv = (sample.v_out * 1000.0).round() as i32;
        let frame = encode(&MessageBody::ForceReport { raw_mv, seq }).expect("fixed-size body");
        let (bodies, _) = self.rs485.feed(&frame);
        let Some(MessageBody::ForceReport { raw_mv, .. }) = bodies.first().copied() else {
            return self.last;
        };
        // Motor board: quantized reading -> normalized force -> stick torque.
        let full_scale_mv = haptics.linearizer().full_scale(&haptics.fsr()) * 1000.0;
        let norm = (raw_mv.unsigned_abs() as f64 / full_scale_mv).clamp(0.0, 1.0);
        let torque_mnm = (haptics.k_t * norm * 1000.0).round() as i32;
        let telemetry = MessageBody::HostTelemetry {
            force_norm_milli: (norm * 1000.0).round() as u16,
            encoder_ticks,
            seq,
        };
        let frame = encode(&telemetry).expect("range-checked body");
        let (bodies, _) = self.usb.feed(&frame);
        if let Some(MessageBody::HostTelemetry {
            force_norm_milli,
            encoder_ticks,
            seq,
        }) = bodies.first().copied()
        {
            self.last = HostTelemetry {
                force_norm_milli,
                encoder_ticks,
                seq,
                torque_mnm,
            };
        }
        self.last
    }
}

/// Everything the control loop owns and mutates.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub joints: JointVector,
    pub gripper: GripperState,
    pub clutch: ClutchState,
    pub object: ObjectModel,
    pub episode_id: u64,
    pub tick: u64,
    /// Virtual tracker pose in the operator frame (integrates operator deltas).
    pub tracker: Pose,
    grasp_height: Option<f64>,
    lift_checked: bool,
    link: BoardLink,
}

impl SessionState {
    pub fn grasp_height(&self) -> Option<f64> {
        self.grasp_height
    }
}

/// Immutable pipeline context shared by every tick.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: ServerConfig,
    pub haptics: HapticsConfig,
    pub gripper: GripperConfig,
    pub transform: FrameTransform,
    pub limits: JointLimits,
    pub weights: SelectionWeights,
    solver: UrSolver,
    workspace: WorkspaceBall,
    home: JointVector,
    home_pose: Pose,
}

impl Pipeline {
    pub fn new(
        cfg: ServerConfig,
        haptics: HapticsConfig,
        gripper: GripperConfig,
        dh: DhTable,
    ) -> Result<Self, ServerError> {
        cfg.validate().map_err(ServerError::Config)?;
        haptics.validate().map_err(|e| ServerError::Config(e.to_string()))?;
        let solver = UrSolver::new(dh)?;
        let home = JointVector(cfg.home_joints);
        let home_pose = forward_kinematics(&home, &dh);
        let workspace = WorkspaceBall::new(home_pose.position, cfg.workspace_radius)
            .map_err(|e| ServerError::Config(e.to_string()))?;
        Ok(Self {
            cfg,
            haptics,
            gripper,
            transform: FrameTransform::identity(),
            limits: JointLimits::default(),
            weights: SelectionWeights::default(),
            solver,
            workspace,
            home,
            home_pose,
        })
    }

    pub fn from_config(config: &Config) -> Result<Self, ServerError> {
        let dh = config.dh_table().map_err(|e| ServerError::Config(e.to_string()))?;
        let mut p = Self::new(config.server, config.haptics, config.gripper, dh)?;
        if let Some(path) = &config.calibration_file {
            let pairs = crate::frames::load_calibration_pairs(path).map_err(|e| ServerError::Config(e.to_string()))?;
            let cal = crate::frames::calibrate(&pairs).map_err(|e| ServerError::Config(e.to_string()))?;
            p.transform = cal.transform;
        }
        Ok(p)
    }

    pub fn with_transform(mut self, t: FrameTransform) -> Self {
        self.transform = t;
        self
    }

    pub fn dh(&self) -> &DhTable {
        self.solver.table()
    }

    pub fn home(&self) -> JointVector {
        self.home
    }

    pub fn home_pose(&self) -> Pose {
        self.home_pose
    }

    pub fn workspace(&self) -> &WorkspaceBall {
        &self.workspace
    }

    pub fn new_session(&self, object: ObjectModel, episode_id: u64) -> SessionState {
        SessionState {
            joints: self.home,
            gripper: GripperState::open(self.gripper.stroke),
            clutch: ClutchState::Disengaged,
            object,
            episode_id,
            tick: 0,
            tracker: self.home_pose,
            grasp_height: None,
            lift_checked: false,
            link: BoardLink::default(),
        }
    }

    fn tracker_sample(&self, state: &SessionState) -> TrackerSample {
        TrackerSample {
            timestamp: self.cfg.time_of(state.tick),
            pose: state.tracker,
        }
    }

    /// Runs one control tick.
    pub fn tick(&self, state: &mut SessionState, input: &TickInput) -> TickReport {
        let mut events = Vec::new();
        let tick = state.tick;

        match input.clutch {
            Some(true) if !state.clutch.is_engaged() => {
                let robot_pose = forward_kinematics(&state.joints, self.dh());
                state.clutch = ClutchState::engage(&self.tracker_sample(state), &robot_pose, &self.transform);
            }
            Some(false) => state.clutch = ClutchState::Disengaged,
            _ => {}
        }

        let commanded = match input.pose {
            None => None,
            Some(PoseInput::Robot(p)) => Some(p),
            Some(PoseInput::Tracker(sample)) => {
                state.tracker = sample.pose;
                clutch_step(state.clutch, &sample, &self.transform).1
            }
            Some(PoseInput::OperatorDelta { translation, rotation }) => {
                let spin = UnitQuaternion::from_euler_angles(rotation.x, rotation.y, rotation.z);
                state.tracker = Pose::new(
                    state.tracker.position + translation,
                    crate::kinematics::renormalize(spin * state.tracker.orientation),
                );
                clutch_step(state.clutch, &self.tracker_sample(state), &self.transform).1
            }
        };

        if let Some(target) = commanded {
            let (target, clamped) = self.workspace.clamp(&target);
            if clamped {
                events.push(Event::Clamp);
            }
            self.move_toward(state, &target, &mut events);
        }

        if let Some(t) = input.gripper_target_mm {
            state.gripper.command(t);
        }
        let (gripper, sensor_force) = contact_step(&state.gripper, &state.object, self.cfg.dt(), &self.gripper);
        state.gripper = gripper;
        let force = self
            .haptics
            .sample(sensor_force)
            .expect("sensor force is non-negative and saturates at full scale");
        let torque = self
            .haptics
            .torque(force.normalized)
            .expect("normalized force lies in [0, 1]");
        let encoder_ticks = (state.gripper.commanded_opening * self.cfg.encoder_ticks_per_mm).round() as i32;
        let host = state.link.exchange(&force, &self.haptics, encoder_ticks);

        let ee_pose = forward_kinematics(&state.joints, self.dh());
        let contact = state.gripper.contact_force;
        if contact > state.object.damage_threshold {
            events.push(Event::Damage);
        }
        if contact > 0.0 {
            state.grasp_height.get_or_insert(ee_pose.position.z);
        } else if !state.lift_checked {
            state.grasp_height = None;
        }
        let lifted = state.grasp_height.is_some_and(|z| ee_pose.position.z - z > LIFT_DETECT);
        if lifted && !state.lift_checked {
            state.lift_checked = true;
            if contact < state.object.min_holding_force() {
                events.push(Event::Slip);
            }
        }

        state.tick += 1;
        TickReport {
            tick,
            time: self.cfg.time_of(tick),
            recording: self.cfg.is_recording_tick(tick),
            joints: state.joints,
            ee_pose,
            opening_mm: state.gripper.opening,
            contact_force: contact,
            force,
            torque,
            lifted,
            host,
            events,
        }
    }

    fn move_toward(&self, state: &mut SessionState, target: &Pose, events: &mut Vec<Event>) {
        let sols = self.solver.solve(target);
        if !sols.singular_branches.is_empty() {
            events.push(Event::Singular);
        }
        let candidates: Vec<JointVector> = sols
            .solutions
            .iter()
            .filter_map(|s| self.limits.unwrap_toward(&s.joints, &state.joints))
            .collect();
        let Ok(best) = select_solution_index(&candidates, &state.joints, &self.weights) else {
            events.push(Event::Unreachable);
            return;
        };
        let goal = candidates[best];
        let max_step = self.cfg.max_joint_vel / self.cfg.control_hz as f64;
        let largest = goal.max_abs_diff(&state.joints);
        if largest > max_step {
            events.push(Event::VelocityClamp);
            let scale = max_step / largest;
            let mut q = state.joints;
            for i in 0..JOINTS {
                let step = ((goal[i] - q[i]) * scale).clamp(-max_step, max_step);
                q.0[i] += step;
            }
            state.joints = q;
        } else {
            state.joints = goal;
        }
    }
}

/// Everything needed to reproduce one scripted episode bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSetup {
    pub task: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub episode_index: u64,
    /// Object preset before per-episode variation.
    pub object: ObjectModel,
    pub server: ServerConfig,
    pub haptics: HapticsConfig,
    pub gripper: GripperConfig,
    pub policy_config: PolicyConfig,
    pub a_max: [f64; 7],
    pub dh: DhTable,
}

impl EpisodeSetup {
    pub fn from_config(
        config: &Config,
        task: &str,
        policy: PolicyKind,
        seed: u64,
        episode_index: u64,
    ) -> Result<Self, ServerError> {
        Ok(Self {
            task: task.to_string(),
            policy,
            seed,
            episode_index,
            object: config.object(task)?,
            server: config.server,
            haptics: config.haptics,
            gripper: config.gripper,
            policy_config: config.policy,
            a_max: config.dataset.a_max,
            dh: config.dh_table().map_err(|e| ServerError::Config(e.to_string()))?,
        })
    }

    pub fn pipeline(&self) -> Result<Pipeline, ServerError> {
        Pipeline::new(self.server, self.haptics, self.gripper, self.dh)
    }

    /// Per-episode random draws: object placement offset (m) and width (mm).
    pub fn variation(&self) -> (Vector3<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.episode_index);
        let r = self.server.placement_radius * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..PI);
        let jitter = self.object.size_jitter_mm;
        let width = if jitter > 0.0 {
            self.object.free_size + rng.random_range(-jitter..=jitter)
        } else {
            self.object.free_size
        };
        (Vector3::new(r * theta.sin(), -r * theta.cos(), 0.0), width)
    }
}

/// Reports, outcome and recorded trajectory of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub reports: Vec<TickReport>,
    pub outcome: GraspOutcome,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Approach,
    Grasp,
    Lift,
}

/// Linear ramp of the commanded tool position toward a waypoint.
fn ramp(from: &Vector3<f64>, to: &Vector3<f64>, step: f64) -> Vector3<f64> {
    let d = to - from;
    let n = d.norm();
    if n <= step {
        *to
    } else {
        from + d * (step / n)
    }
}

/// Runs a scripted episode with the setup's own scripted policy.
pub fn run_episode(setup: &EpisodeSetup) -> Result<EpisodeRun, ServerError> {
    let mut policy = scripted_policy(setup.policy, &setup.object, &setup.policy_config, setup.haptics.f_max);
    run_episode_with(setup, &mut policy)
}

/// Runs a scripted episode: approach the object, let `policy` close the
/// gripper until it asks to lift, then lift by `lift_height`. Ends on lift
/// completion, damage, slip or after `max_ticks`.
pub fn run_episode_with(setup: &EpisodeSetup, policy: &mut dyn GripperPolicy) -> Result<EpisodeRun, ServerError> {
    let pipeline = setup.pipeline()?;
    let cfg = &pipeline.cfg;
    let (offset, width) = setup.variation();
    let object = ObjectModel {
        free_size: width,
        ..setup.object.clone()
    };
    let mut state = pipeline.new_session(object.clone(), setup.episode_index);

    let home = pipeline.home_pose();
    let grasp = home.position + offset - Vector3::new(0.0, 0.0, cfg.approach_depth);
    let lift = grasp + Vector3::new(0.0, 0.0, cfg.lift_height);
    let step = cfg.ee_speed * cfg.dt();
    let mut command = home.position;
    let mut stage = Stage::Approach;
    let mut reports: Vec<TickReport> = Vec::new();
    let mut recorded: Vec<(Observation, [f64; 7])> = Vec::new();

    while state.tick < cfg.max_ticks {
        let mut input = TickInput::default();
        let last_pos = reports.last().map(|r| r.ee_pose.position).unwrap_or(home.position);
        match stage {
            Stage::Approach => {
                command = ramp(&command, &grasp, step);
                input.pose = Some(PoseInput::Robot(Pose::new(command, home.orientation)));
                if command == grasp && (last_pos - grasp).norm() < WAYPOINT_TOLERANCE {
                    stage = Stage::Grasp;
                }
            }
            Stage::Grasp | Stage::Lift => {
                let obs = GripperObservation {
                    opening: state.gripper.opening,
                    normalized_force: reports.last().map_or(0.0, |r| r.force.normalized),
                };
                let cmd = policy.step(&obs, cfg.dt());
                input.gripper_target_mm = cmd.target_opening;
                if stage == Stage::Grasp && cmd.ready_to_lift {
                    stage = Stage::Lift;
                }
                if stage == Stage::Lift {
                    command = ramp(&command, &lift, step);
                    input.pose = Some(PoseInput::Robot(Pose::new(command, home.orientation)));
                }
            }
        }

        let report = pipeline.tick(&mut state, &input);
        if report.recording {
            recorded.push(record_sample(&report, pipeline.gripper.stroke));
        }
        let damaged = report.events.contains(&Event::Damage);
        let slipped = report.events.contains(&Event::Slip);
        let lifted_done = stage == Stage::Lift
            && state
                .grasp_height()
                .is_some_and(|z| report.ee_pose.position.z - z >= cfg.lift_height - WAYPOINT_TOLERANCE);
        reports.push(report);
        if damaged || slipped || lifted_done {
            let trace: Vec<TracePoint> = reports
                .iter()
                .map(|r| TracePoint {
                    force: r.contact_force,
                    opening: r.opening_mm,
                    lifted: r.lifted,
                })
                .collect();
            let outcome = classify_outcome(&trace, &object)?;
            let trajectory = build_trajectory(setup, &recorded, Some(outcome))?;
            return Ok(EpisodeRun {
                reports,
                outcome,
                trajectory,
            });
        }
    }
    Err(ServerError::Timeout {
        ticks: cfg.max_ticks,
        reports,
    })
}

/// Observation plus the raw 7-vector (joints, opening mm) of a recording tick.
pub fn record_sample(report: &TickReport, stroke: f64) -> (Observation, [f64; 7]) {
    let mut raw = [0.0; 7];
    raw[..JOINTS].copy_from_slice(report.joints.as_array());
    raw[JOINTS] = report.opening_mm;
    let obs = Observation {
        joints: *report.joints.as_array(),
        ee_pose: report.ee_pose.to_array(),
        gripper_pos_norm: (report.opening_mm / stroke).clamp(0.0, 1.0),
        force_norm: report.force.normalized,
        wrist_image_ref: None,
        side_image_ref: None,
    };
    (obs, raw)
}

fn build_trajectory(
    setup: &EpisodeSetup,
    recorded: &[(Observation, [f64; 7])],
    outcome: Option<GraspOutcome>,
) -> Result<Trajectory, ServerError> {
    let header = TrajectoryHeader {
        episode_id: setup.episode_index,
        task: setup.task.clone(),
        a_max: setup.a_max,
        control_hz: setup.server.control_hz,
        record_hz: setup.server.record_hz(),
        stroke_mm: setup.gripper.stroke,
        f_max: setup.haptics.f_max,
        outcome,
        setup: Some(setup.clone()),
        ..TrajectoryHeader::default()
    };
    Ok(dataset::assemble(header, recorded)?)
}
