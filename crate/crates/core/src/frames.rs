//! Operator-to-robot frame mapping: rigid transforms, calibration from point
//! pairs, clutched relative control and the workspace ball.

use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{parse_numbers, renormalize, Pose};

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("degenerate calibration geometry: {0}")]
    DegenerateGeometry(String),
    #[error("workspace radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One tracker reading in the operator frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerSample {
    /// Monotonic seconds.
    pub timestamp: f64,
    pub pose: Pose,
}

/// Maps operator-frame poses into the robot base frame:
/// `position <- R * (scale .* p) + translation`, `orientation <- R * q`.
///
/// `scale` defaults to ones, in which case the map is rigid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: Vector3<f64>,
}

impl Default for FrameTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            scale: Vector3::repeat(1.0),
        }
    }

    pub fn with_scale(mut self, scale: Vector3<f64>) -> Self {
        self.scale = scale;
        self
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// `self` after `first`. Only defined for rigid (unit-scale) transforms.
    pub fn compose(&self, first: &FrameTransform) -> FrameTransform {
        FrameTransform::new(
            renormalize(self.rotation * first.rotation),
            self.rotation * first.translation + self.translation,
        )
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * self.scale.component_mul(p) + self.translation
    }
}

pub fn apply_transform(t: &FrameTransform, p: &Pose) -> Pose {
    Pose::new(t.apply_point(&p.position), renormalize(t.rotation * p.orientation))
}

/// Result of a calibration fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub transform: FrameTransform,
    /// Right-multiplied onto mapped orientations so the first pair's
    /// orientations coincide.
    pub orientation_offset: UnitQuaternion<f64>,
    /// Root-mean-square position residual (m).
    pub residual_rms: f64,
}

impl Calibration {
    pub fn map(&self, p: &Pose) -> Pose {
        let mapped = apply_transform(&self.transform, p);
        Pose::new(
            mapped.position,
            renormalize(mapped.orientation * self.orientation_offset),
        )
    }
}

/// Least-squares rigid fit (SVD / Kabsch) minimising `sum |R p_i + t - q_i|^2`
/// over operator/robot pose pairs.
pub fn calibrate(pairs: &[(Pose, Pose)]) -> Result<Calibration, FramesError> {
    if pairs.len() < 3 {
        return Err(FramesError::DegenerateGeometry(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let op_centroid = pairs.iter().map(|(o, _)| o.position).sum::<Vector3<f64>>() / n;
    let rb_centroid = pairs.iter().map(|(_, r)| r.position).sum::<Vector3<f64>>() / n;

    let mut cross = Matrix3::zeros();
    for (o, r) in pairs {
        cross += (o.position - op_centroid) * (r.position - rb_centroid).transpose();
    }
    let svd = cross.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(sv[0] > 1e-18) || sv[1] <= 1e-9 * sv[0] {
        return Err(FramesError::DegenerateGeometry(
            "points are coincident or collinear".into(),
        ));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    let r = v * fix * u.transpose();
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = rb_centroid - rotation * op_centroid;
    let transform = FrameTransform::new(rotation, translation);

    let sq: f64 = pairs
        .iter()
        .map(|(o, r)| (transform.apply_point(&o.position) - r.position).norm_squared())
        .sum();
    let (op0, rb0) = pairs[0];
    let mapped0 = renormalize(rotation * op0.orientation);
    let orientation_offset = renormalize(mapped0.inverse() * rb0.orientation);
    Ok(Calibration {
        transform,
        orientation_offset,
        residual_rms: (sq / n).sqrt(),
    })
}

/// Reads calibration pairs: six numbers per line, operator xyz then robot xyz.
pub fn parse_calibration_pairs(text: &str) -> Result<Vec<(Pose, Pose)>, FramesError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_numbers(line).map_err(|message| FramesError::Parse { line: idx + 1, message })?;
        if v.len() != 6 {
            return Err(FramesError::Parse {
                line: idx + 1,
                message: format!("expected 6 values, found {}", v.len()),
            });
        }
        out.push((
            Pose::from_position(v[0], v[1], v[2]),
            Pose::from_position(v[3], v[4], v[5]),
        ));
    }
    Ok(out)
}

pub fn load_calibration_pairs(path: impl AsRef<Path>) -> Result<Vec<(Pose, Pose)>, FramesError> {
    parse_calibration_pairs(&std::fs::read_to_string(path)?)
}

/// Clutch for relative teleoperation. Anchors exist exactly while engaged;
/// the operator anchor is stored already mapped into the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ClutchState {
    #[default]
    Disengaged,
    Engaged {
        anchor_operator: Pose,
        anchor_robot: Pose,
    },
}

impl ClutchState {
    pub fn engage(sample: &TrackerSample, robot_pose: &Pose, t: &FrameTransform) -> Self {
        ClutchState::Engaged {
            anchor_operator: apply_transform(t, &sample.pose),
            anchor_robot: *robot_pose,
        }
    }

    pub fn is_engaged(&self) -> bool {
        matches!(self, ClutchState::Engaged { .. })
    }
}

/// Commanded pose `anchor_robot * (anchor_operator^-1 * T(sample))` while
/// engaged; nothing while disengaged.
pub fn clutch_step(state: ClutchState, sample: &TrackerSample, t: &FrameTransform) -> (ClutchState, Option<Pose>) {
    match state {
        ClutchState::Disengaged => (state, None),
        ClutchState::Engaged {
            anchor_operator,
            anchor_robot,
        } => {
            let mapped = apply_transform(t, &sample.pose);
            let relative = anchor_operator.inverse().compose(&mapped);
            (state, Some(anchor_robot.compose(&relative)))
        }
    }
}

/// Ball-shaped workspace bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBall {
    pub center: [f64; 3],
    pub radius: f64,
}

impl WorkspaceBall {
    pub fn new(center: Vector3<f64>, radius: f64) -> Result<Self, FramesError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(FramesError::BadRadius(radius));
        }
        Ok(Self {
            center: center.into(),
            radius,
        })
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    /// Clamped pose and whether the position had to move.
    pub fn clamp(&self, p: &Pose) -> (Pose, bool) {
        let c = self.center();
        let offset = p.position - c;
        let dist = offset.norm();
        if dist <= self.radius {
            return (*p, false);
        }
        let position = c + offset * (self.radius / dist);
        (Pose::new(position, p.orientation), true)
    }
}

/// Radial projection of `p` onto the ball about `center`; orientation is kept.
pub fn clamp_workspace(p: &Pose, center: &Vector3<f64>, radius: f64) -> Result<Pose, FramesError> {
    Ok(WorkspaceBall::new(*center, radius)?.clamp(p).0)
}
