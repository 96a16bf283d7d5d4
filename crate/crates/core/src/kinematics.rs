//! Forward and closed-form inverse kinematics for six-revolute arms with
//! UR-style geometry.
//!
//! Forward kinematics and the geometric Jacobian accept any 6-row standard
//! DH table. The analytic inverse needs the UR wrist layout: the three middle
//! joints parallel, `alpha = (pi/2, 0, 0, pi/2, -pi/2, 0)`, and
//! `a1 = a4 = a5 = a6 = d2 = d3 = 0`. [`UrSolver::new`] checks this.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::Index;
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Matrix6, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of joints of the arm.
pub const JOINTS: usize = 6;

/// Position tolerance (m) an IK branch must meet under forward kinematics.
pub const IK_POSITION_TOLERANCE: f64 = 1e-9;
/// Orientation tolerance (rad) an IK branch must meet under forward kinematics.
pub const IK_ANGLE_TOLERANCE: f64 = 1e-9;
/// Branches with `|sin(q5)|` below this are dropped as wrist-singular.
pub const WRIST_SINGULARITY_THRESHOLD: f64 = 1e-6;

const STRUCTURE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("DH table is not finite at row {row}")]
    NonFiniteTable { row: usize },
    #[error("DH table does not have UR-style geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Six joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; JOINTS]);

impl JointVector {
    pub const fn new(q: [f64; JOINTS]) -> Self {
        Self(q)
    }

    pub const fn zeros() -> Self {
        Self([0.0; JOINTS])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|q| q.is_finite())
    }

    pub fn as_array(&self) -> &[f64; JOINTS] {
        &self.0
    }

    /// Largest absolute per-joint difference, without angle wrapping.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest per-joint difference after wrapping each difference into (-pi, pi].
    pub fn max_wrapped_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| wrap_angle(a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for JointVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<[f64; JOINTS]> for JointVector {
    fn from(q: [f64; JOINTS]) -> Self {
        Self(q)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// End-effector pose: position in meters and a unit orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_position(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn inverse(&self) -> Pose {
        Pose::from_isometry(&self.to_isometry().inverse())
    }

    /// `self * other` as rigid transforms.
    pub fn compose(&self, other: &Pose) -> Pose {
        let orientation = renormalize(self.orientation * other.orientation);
        Pose::new(self.orientation * other.position + self.position, orientation)
    }

    pub fn position_error(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Geodesic angle between the two orientations, accurate for tiny angles.
    pub fn angular_distance(&self, other: &Pose) -> f64 {
        quaternion_angle(&(self.orientation.inverse() * other.orientation))
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// `[x, y, z, qw, qx, qy, qz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [self.position.x, self.position.y, self.position.z, q.w, q.i, q.j, q.k]
    }

    /// Inverse of [`Pose::to_array`]. Returns `None` if the quaternion part is
    /// not unit within 1e-9 or any entry is non-finite.
    pub fn from_array(a: [f64; 7]) -> Option<Pose> {
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let q = nalgebra::Quaternion::new(a[3], a[4], a[5], a[6]);
        if (q.norm() - 1.0).abs() > 1e-9 {
            return None;
        }
        Some(Pose::new(
            Vector3::new(a[0], a[1], a[2]),
            UnitQuaternion::new_unchecked(q),
        ))
    }
}

pub(crate) fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Rotation angle of a unit quaternion in [0, pi].
pub fn quaternion_angle(q: &UnitQuaternion<f64>) -> f64 {
    let v = q.imag().norm();
    2.0 * v.atan2(q.w.abs())
}

/// One row of a standard Denavit-Hartenberg table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Self {
        Self {
            a,
            d,
            alpha,
            theta_offset,
        }
    }

    /// `Rz(q + offset) * Tz(d) * Tx(a) * Rx(alpha)`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let theta = q + self.theta_offset;
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        let (s, c) = theta.sin_cos();
        let translation = Vector3::new(self.a * c, self.a * s, self.d);
        Isometry3::from_parts(Translation3::from(translation), rz * rx)
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.d.is_finite() && self.alpha.is_finite() && self.theta_offset.is_finite()
    }
}

/// Six DH rows, base to tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhTable {
    rows: [DhRow; JOINTS],
}

impl DhTable {
    pub fn new(rows: [DhRow; JOINTS]) -> Result<Self, KinematicsError> {
        if let Some(row) = rows.iter().position(|r| !r.is_finite()) {
            return Err(KinematicsError::NonFiniteTable { row });
        }
        Ok(Self { rows })
    }

    /// Published UR3 geometry.
    pub fn ur3() -> Self {
        Self {
            rows: [
                DhRow::new(0.0, 0.1519, PI / 2.0, 0.0),
                DhRow::new(-0.24365, 0.0, 0.0, 0.0),
                DhRow::new(-0.21325, 0.0, 0.0, 0.0),
                DhRow::new(0.0, 0.11235, PI / 2.0, 0.0),
                DhRow::new(0.0, 0.08535, -PI / 2.0, 0.0),
                DhRow::new(0.0, 0.0819, 0.0, 0.0),
            ],
        }
    }

    pub fn rows(&self) -> &[DhRow; JOINTS] {
        &self.rows
    }

    /// Parses one row per non-empty line: `a d alpha theta_offset`.
    /// Whitespace or commas separate fields; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, KinematicsError> {
        let mut rows = Vec::with_capacity(JOINTS);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let values = parse_numbers(line).map_err(|message| KinematicsError::Parse { line: idx + 1, message })?;
            if values.len() != 4 {
                return Err(KinematicsError::Parse {
                    line: idx + 1,
                    message: format!("expected 4 values, found {}", values.len()),
                });
            }
            rows.push(DhRow::new(values[0], values[1], values[2], values[3]));
        }
        let rows: [DhRow; JOINTS] = rows.try_into().map_err(|r: Vec<DhRow>| KinematicsError::Parse {
            line: 0,
            message: format!("expected {JOINTS} rows, found {}", r.len()),
        })?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Upper bound on the distance from the base origin to the tool origin.
    pub fn max_reach(&self) -> f64 {
        self.rows.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }
}

impl Default for DhTable {
    fn default() -> Self {
        Self::ur3()
    }
}

pub(crate) fn parse_numbers(line: &str) -> Result<Vec<f64>, String> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect()
}

/// Per-joint position limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: [f64; JOINTS],
    pub upper: [f64; JOINTS],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            lower: [-TAU; JOINTS],
            upper: [TAU; JOINTS],
        }
    }
}

impl JointLimits {
    pub fn contains(&self, q: &JointVector) -> bool {
        q.0.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| v.is_finite() && lo <= v && v <= hi)
    }

    /// Shifts each joint of `candidate` by a multiple of 2*pi so that it lands
    /// as close as possible to `current` while staying inside the limits.
    /// Returns `None` if some joint has no in-limit equivalent.
    pub fn unwrap_toward(&self, candidate: &JointVector, current: &JointVector) -> Option<JointVector> {
        let mut out = [0.0; JOINTS];
        for i in 0..JOINTS {
            let base = current[i] + wrap_angle(candidate[i] - current[i]);
            let best = [base, base - TAU, base + TAU]
                .into_iter()
                .filter(|v| *v >= self.lower[i] && *v <= self.upper[i])
                .min_by(|a, b| (a - current[i]).abs().partial_cmp(&(b - current[i]).abs()).unwrap())?;
            out[i] = best;
        }
        Some(JointVector(out))
    }
}

/// Tool pose for joint angles `q`.
pub fn forward_kinematics(q: &JointVector, dh: &DhTable) -> Pose {
    let frames = joint_frames(q, dh);
    Pose::from_isometry(&frames[JOINTS])
}

/// Base frame followed by the six link frames, each expressed in the base.
pub fn joint_frames(q: &JointVector, dh: &DhTable) -> [Isometry3<f64>; JOINTS + 1] {
    let mut frames = [Isometry3::identity(); JOINTS + 1];
    for (i, row) in dh.rows.iter().enumerate() {
        frames[i + 1] = frames[i] * row.transform(q[i]);
    }
    frames
}

/// Geometric Jacobian. Rows 0..3 map joint rates to linear tool velocity
/// (m/rad), rows 3..6 to angular velocity (rad/rad), both in the base frame.
pub fn jacobian(q: &JointVector, dh: &DhTable) -> Matrix6<f64> {
    let frames = joint_frames(q, dh);
    let tip = frames[JOINTS].translation.vector;
    let mut j = Matrix6::zeros();
    for i in 0..JOINTS {
        let z = frames[i].rotation * Vector3::z();
        let o = frames[i].translation.vector;
        let lin = z.cross(&(tip - o));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

/// Smallest singular value of the Jacobian; zero at singular configurations.
pub fn manipulability_margin(q: &JointVector, dh: &DhTable) -> f64 {
    jacobian(q, dh)
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// One IK branch. `branch = shoulder * 4 + elbow * 2 + wrist`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub branch: u8,
    pub joints: JointVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IkSolutions {
    /// Verified branches in ascending branch order.
    pub solutions: Vec<IkSolution>,
    /// Branches dropped because the wrist was within the singularity threshold.
    pub singular_branches: Vec<u8>,
}

impl IkSolutions {
    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn joints(&self) -> Vec<JointVector> {
        self.solutions.iter().map(|s| s.joints).collect()
    }
}

/// Closed-form solver for a validated UR-style table.
#[derive(Debug, Clone, Copy)]
pub struct UrSolver {
    dh: DhTable,
    d1: f64,
    a2: f64,
    a3: f64,
    d4: f64,
    d5: f64,
    d6: f64,
}

impl UrSolver {
    pub fn new(dh: DhTable) -> Result<Self, KinematicsError> {
        let r = &dh.rows;
        let expected_alpha = [PI / 2.0, 0.0, 0.0, PI / 2.0, -PI / 2.0, 0.0];
        for (i, (row, alpha)) in r.iter().zip(expected_alpha).enumerate() {
            if (row.alpha - alpha).abs() > STRUCTURE_TOLERANCE {
                return Err(KinematicsError::UnsupportedGeometry(format!(
                    "alpha{} = {} (expected {alpha})",
                    i + 1,
                    row.alpha
                )));
            }
        }
        for (name, v) in [
            ("a1", r[0].a),
            ("a4", r[3].a),
            ("a5", r[4].a),
            ("a6", r[5].a),
            ("d2", r[1].d),
            ("d3", r[2].d),
        ] {
            if v.abs() > STRUCTURE_TOLERANCE {
                return Err(KinematicsError::UnsupportedGeometry(format!(
                    "{name} = {v} (expected 0)"
                )));
            }
        }
        if r[1].a.abs() < STRUCTURE_TOLERANCE || r[2].a.abs() < STRUCTURE_TOLERANCE {
            return Err(KinematicsError::UnsupportedGeometry(
                "a2 and a3 must be non-zero".into(),
            ));
        }
        if r[5].d.abs() < STRUCTURE_TOLERANCE {
            return Err(KinematicsError::UnsupportedGeometry("d6 must be non-zero".into()));
        }
        Ok(Self {
            dh,
            d1: r[0].d,
            a2: r[1].a,
            a3: r[2].a,
            d4: r[3].d,
            d5: r[4].d,
            d6: r[5].d,
        })
    }

    pub fn table(&self) -> &DhTable {
        &self.dh
    }

    /// Full discrete solution set for `target` (0..=8 branches).
    pub fn solve(&self, target: &Pose) -> IkSolutions {
        let mut out = IkSolutions::default();
        let rot: Matrix3<f64> = target.orientation.to_rotation_matrix().into_inner();
        let p = target.position;
        let z6 = rot.column(2).into_owned();
        let p05 = p - self.d6 * z6;

        let radial = p05.x.hypot(p05.y);
        if radial < self.d4.abs() || radial == 0.0 {
            return out;
        }
        let psi = p05.y.atan2(p05.x);
        let phi = (self.d4 / radial).asin();
        let shoulders = [psi + phi, psi + PI - phi];

        for (shoulder, &th1) in shoulders.iter().enumerate() {
            let (s1, c1) = th1.sin_cos();
            let c5 = (p.x * s1 - p.y * c1 - self.d4) / self.d6;
            if c5.abs() > 1.0 + 1e-12 {
                continue;
            }
            let c5 = c5.clamp(-1.0, 1.0);
            let base_frame = self.dh.rows[0].transform(th1 - self.dh.rows[0].theta_offset);
            let r01 = base_frame.rotation.to_rotation_matrix().into_inner();
            let r16 = r01.transpose() * rot;
            let p15 = r01.transpose() * (p05 - Vector3::new(0.0, 0.0, self.d1));

            for wrist in 0..2u8 {
                let th5 = if wrist == 0 { c5.acos() } else { -c5.acos() };
                let s5 = th5.sin();
                if s5.abs() < WRIST_SINGULARITY_THRESHOLD {
                    for elbow in 0..2u8 {
                        out.singular_branches.push(branch_index(shoulder as u8, elbow, wrist));
                    }
                    continue;
                }
                let th6 = (-r16[(2, 1)] / s5).atan2(r16[(2, 0)] / s5);
                let th234 = (-r16[(1, 2)] / s5).atan2(-r16[(0, 2)] / s5);
                let z4 = Vector3::new(th234.sin(), -th234.cos(), 0.0);
                let p14 = p15 - self.d5 * z4;
                let (x, y) = (p14.x, p14.y);
                let c3 = (x * x + y * y - self.a2 * self.a2 - self.a3 * self.a3) / (2.0 * self.a2 * self.a3);
                if c3.abs() > 1.0 + 1e-12 {
                    continue;
                }
                let c3 = c3.clamp(-1.0, 1.0);
                for elbow in 0..2u8 {
                    let th3 = if elbow == 0 { c3.acos() } else { -c3.acos() };
                    let s3 = th3.sin();
                    let th2 = y.atan2(x) - (self.a3 * s3).atan2(self.a2 + self.a3 * c3);
                    let th4 = th234 - th2 - th3;
                    let thetas = [th1, th2, th3, th4, th5, th6];
                    let mut q = [0.0; JOINTS];
                    for i in 0..JOINTS {
                        q[i] = wrap_angle(thetas[i] - self.dh.rows[i].theta_offset);
                    }
                    let q = self.polish(JointVector(q), target);
                    if self.verifies(&q, target) {
                        out.solutions.push(IkSolution {
                            branch: branch_index(shoulder as u8, elbow, wrist),
                            joints: q,
                        });
                    }
                }
            }
        }
        out.solutions.sort_by_key(|s| s.branch);
        out.singular_branches.sort_unstable();
        out
    }

    fn verifies(&self, q: &JointVector, target: &Pose) -> bool {
        if !q.is_finite() {
            return false;
        }
        let fk = forward_kinematics(q, &self.dh);
        fk.position_error(target) < IK_POSITION_TOLERANCE && fk.angular_distance(target) < IK_ANGLE_TOLERANCE
    }

    /// A few Newton steps on the closed-form seed to remove rounding loss
    /// near acos/asin endpoints. Steps that do not reduce the error are discarded.
    fn polish(&self, seed: JointVector, target: &Pose) -> JointVector {
        let mut q = seed;
        let mut err = pose_twist_error(&forward_kinematics(&q, &self.dh), target);
        for _ in 0..3 {
            if err.norm() < 1e-15 {
                break;
            }
            let Some(step) = jacobian(&q, &self.dh).lu().solve(&err) else {
                break;
            };
            let mut next = q;
            for i in 0..JOINTS {
                next.0[i] = wrap_angle(q[i] + step[i]);
            }
            let next_err = pose_twist_error(&forward_kinematics(&next, &self.dh), target);
            if !(next_err.norm() < err.norm()) {
                break;
            }
            q = next;
            err = next_err;
        }
        q
    }
}

fn branch_index(shoulder: u8, elbow: u8, wrist: u8) -> u8 {
    shoulder * 4 + elbow * 2 + wrist
}

/// Twist (linear; angular) taking `from` to `to`, in the base frame.
fn pose_twist_error(from: &Pose, to: &Pose) -> Vector6<f64> {
    let lin = to.position - from.position;
    let ang = (to.orientation * from.orientation.inverse()).scaled_axis();
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Convenience wrapper building a [`UrSolver`] for a single query.
pub fn inverse_kinematics(target: &Pose, dh: &DhTable) -> Result<IkSolutions, KinematicsError> {
    Ok(UrSolver::new(*dh)?.solve(target))
}

/// Weights of the joint-space distance used by [`select_solution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights(pub [f64; JOINTS]);

impl Default for SelectionWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])
    }
}

impl SelectionWeights {
    pub fn distance(&self, a: &JointVector, b: &JointVector) -> f64 {
        (0..JOINTS).map(|i| self.0[i] * (a[i] - b[i]).abs()).sum()
    }
}

/// Index of the candidate closest to `current`; the first one wins ties.
pub fn select_solution_index(
    candidates: &[JointVector],
    current: &JointVector,
    weights: &SelectionWeights,
) -> Result<usize, KinematicsError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let d = weights.distance(c, current);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i).ok_or(KinematicsError::EmptyCandidateSet)
}

pub fn select_solution(
    candidates: &[JointVector],
    current: &JointVector,
    weights: &SelectionWeights,
) -> Result<JointVector, KinematicsError> {
    select_solution_index(candidates, current, weights).map(|i| candidates[i])
}

impl fmt::Display for JointVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, q) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{q:.6}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng) -> JointVector {
        let mut q = [0.0; JOINTS];
        for v in q.iter_mut() {
            *v = rng.random_range(-PI..PI);
        }
        JointVector(q)
    }

    #[test]
    fn base_rotation_symmetry() {
        let dh = DhTable::ur3();
        let p0 = forward_kinematics(&JointVector::zeros(), &dh).position;
        let mut q = JointVector::zeros();
        q.0[0] = PI;
        let p1 = forward_kinematics(&q, &dh).position;
        assert_relative_eq!(p1.x, -p0.x, epsilon = 1e-12);
        assert_relative_eq!(p1.y, -p0.y, epsilon = 1e-12);
        assert_relative_eq!(p1.z, p0.z, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_contains_seed() {
        let dh = DhTable::ur3();
        let solver = UrSolver::new(dh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let target = forward_kinematics(&q, &dh);
            let sols = solver.solve(&target);
            let best = sols
                .solutions
                .iter()
                .map(|s| s.joints.max_wrapped_diff(&q))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "q={q} best={best}");
        }
    }

    #[test]
    fn unreachable_target_is_empty() {
        let dh = DhTable::ur3();
        let far = Pose::from_position(dh.max_reach() + 0.1, 0.0, 0.2);
        assert!(inverse_kinematics(&far, &dh).unwrap().is_empty());
    }

    #[test]
    fn wrist_singular_branches_are_reported() {
        let dh = DhTable::ur3();
        let q = JointVector([0.3, -1.2, 1.1, -0.4, 0.0, 0.7]);
        let sols = inverse_kinematics(&forward_kinematics(&q, &dh), &dh).unwrap();
        assert!(!sols.singular_branches.is_empty());
        for s in &sols.solutions {
            assert!(s.joints[4].sin().abs() >= WRIST_SINGULARITY_THRESHOLD);
        }
    }

    #[test]
    fn rejects_non_ur_geometry() {
        let mut rows = *DhTable::ur3().rows();
        rows[3].a = 0.05;
        let dh = DhTable::new(rows).unwrap();
        assert!(matches!(
            UrSolver::new(dh),
            Err(KinematicsError::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn theta_offsets_are_honoured() {
        let mut rows = *DhTable::ur3().rows();
        rows[1].theta_offset = -PI / 2.0;
        rows[3].theta_offset = -PI / 2.0;
        let dh = DhTable::new(rows).unwrap();
        let q = JointVector([0.2, 0.3, 1.0, 0.1, -0.9, 0.4]);
        let sols = inverse_kinematics(&forward_kinematics(&q, &dh), &dh).unwrap();
        assert!(sols.solutions.iter().any(|s| s.joints.max_wrapped_diff(&q) < 1e-9));
    }

    #[test]
    fn selection_prefers_closest_and_first_on_tie() {
        let w = SelectionWeights::default();
        let cur = JointVector::zeros();
        let near = JointVector([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let far = JointVector([0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(select_solution(&[far, near], &cur, &w).unwrap(), near);
        assert_eq!(select_solution(&[cur], &cur, &w).unwrap(), cur);
        let a = JointVector([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = JointVector([-0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(select_solution_index(&[a, b], &cur, &w).unwrap(), 0);
        assert!(matches!(
            select_solution(&[], &cur, &w),
            Err(KinematicsError::EmptyCandidateSet)
        ));
    }

    #[test]
    fn wrist_weights_are_halved() {
        let w = SelectionWeights::default();
        let cur = JointVector::zeros();
        let shoulder = JointVector([0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let wrist = JointVector([0.0, 0.0, 0.0, 0.3, 0.0, 0.0]);
        assert_eq!(select_solution(&[shoulder, wrist], &cur, &w).unwrap(), wrist);
    }

    #[test]
    fn unwrap_stays_in_limits() {
        let limits = JointLimits::default();
        let cur = JointVector([6.0, 0.0, 0.0, 0.0, 0.0, -6.0]);
        let cand = JointVector([-0.2, 0.1, 0.0, 0.0, 0.0, 0.2]);
        let u = limits.unwrap_toward(&cand, &cur).unwrap();
        assert_relative_eq!(u[0], -0.2 + TAU, epsilon = 1e-12);
        assert_relative_eq!(u[5], 0.2 - TAU, epsilon = 1e-12);
        assert!(limits.contains(&u));
    }

    #[test]
    fn parses_table_file() {
        let text = "# a d alpha offset\n0 0.1519 1.5707963267948966 0\n-0.24365 0 0 0\n\
                    -0.21325, 0, 0, 0\n0 0.11235 1.5707963267948966 0\n\
                    0 0.08535 -1.5707963267948966 0\n0 0.0819 0 0\n";
        let dh = DhTable::parse(text).unwrap();
        assert_relative_eq!(dh.rows()[2].a, -0.21325);
        assert!(DhTable::parse("0 0 0 0\n").is_err());
        assert!(DhTable::parse("0 0 x 0\n").is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn angular_distance_resolves_small_angles() {
        let a = Pose::identity();
        let b = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 1e-10),
        );
        assert_relative_eq!(a.angular_distance(&b), 1e-10, max_relative = 1e-6);
    }
}
