//! Forward and inverse kinematics for a 6-DOF serial arm.
//!
//! The kinematic model is a six-row table of standard DH parameters
//! (`a`, `d`, `alpha` per joint, transform `Rz(theta) Tz(d) Tx(a) Rx(alpha)`)
//! plus per-joint limit intervals and the capsule radii used by the
//! collision world. The default parameter set matches published nominal
//! UR10 kinematics; any serial chain expressible in this convention can be
//! configured for tests.

mod ik;

pub use ik::{ik_closest, ik_closest_weighted, inverse_kinematics, rebranch_toward, DistanceMetric};

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const JOINT_COUNT: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} value {value} outside limits [{lo}, {hi}]")]
    LimitViolation { joint: usize, value: f64, lo: f64, hi: f64 },
    #[error("non-finite joint parameter: {0}")]
    NonFiniteParameter(&'static str),
}

/// Wrap an angle to the interval `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// One configuration-space point: six joint angles in radians, base to wrist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    angles: [f64; JOINT_COUNT],
}

impl JointConfig {
    pub fn new(angles: [f64; JOINT_COUNT]) -> Self {
        Self { angles }
    }

    pub fn zeros() -> Self {
        Self::new([0.0; JOINT_COUNT])
    }

    pub fn angles(&self) -> &[f64; JOINT_COUNT] {
        &self.angles
    }

    pub fn angle(&self, joint: usize) -> f64 {
        self.angles[joint]
    }

    /// All angles mapped to `(-pi, pi]`.
    pub fn wrapped(&self) -> Self {
        let mut w = self.angles;
        for v in &mut w {
            *v = wrap_angle(*v);
        }
        Self::new(w)
    }

    /// Unweighted Euclidean distance over wrapped per-joint differences.
    pub fn distance(&self, other: &Self) -> f64 {
        self.weighted_distance(other, &[1.0; JOINT_COUNT])
    }

    /// Weighted Euclidean distance over wrapped per-joint differences.
    pub fn weighted_distance(&self, other: &Self, weights: &[f64; JOINT_COUNT]) -> f64 {
        self.angles
            .iter()
            .zip(other.angles.iter())
            .zip(weights.iter())
            .map(|((a, b), w)| {
                let d = w * wrap_angle(a - b);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest wrapped per-joint deviation, optionally weighted.
    pub fn max_abs_distance(&self, other: &Self, weights: &[f64; JOINT_COUNT]) -> f64 {
        self.angles
            .iter()
            .zip(other.angles.iter())
            .zip(weights.iter())
            .map(|((a, b), w)| (w * wrap_angle(a - b)).abs())
            .fold(0.0, f64::max)
    }

    /// Raw (unwrapped) Euclidean distance, the metric planners interpolate in.
    pub fn raw_distance(&self, other: &Self) -> f64 {
        self.angles
            .iter()
            .zip(other.angles.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Linear interpolation in raw joint space, `t` in `[0, 1]`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let mut out = [0.0; JOINT_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.angles[i] + t * (other.angles[i] - self.angles[i]);
        }
        Self::new(out)
    }
}

impl From<[f64; JOINT_COUNT]> for JointConfig {
    fn from(angles: [f64; JOINT_COUNT]) -> Self {
        Self::new(angles)
    }
}

/// End-effector position and orientation in the robot base frame.
///
/// The quaternion is kept unit-norm with a canonical sign (scalar part
/// non-negative; ties broken on the first nonzero vector component) so that
/// poses compare deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Point3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation: canonical_quat(orientation) }
    }

    pub fn identity() -> Self {
        Self::new(Point3::origin(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(Point3::from(iso.translation.vector), iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position.coords), self.orientation)
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    pub fn position_distance(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Geodesic angle between the two orientations, in `[0, pi]`.
    pub fn angular_distance(&self, other: &Pose) -> f64 {
        quat_angle(&self.orientation, &other.orientation)
    }

    pub fn is_close(&self, other: &Pose, pos_tol: f64, ang_tol: f64) -> bool {
        self.position_distance(other) <= pos_tol && self.angular_distance(other) <= ang_tol
    }
}

/// Gripper orientation pointing down at the floor, composed with yaw, pitch
/// and roll offsets (radians) applied in the base frame.
pub fn downward_orientation(yaw: f64, pitch: f64, roll: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch)
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll + PI)
}

/// Geodesic angle between unit quaternions, sign-insensitive. The atan2 form
/// stays accurate for tiny angles where acos of the dot product loses digits.
pub fn quat_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let r = a.inverse() * b;
    let vec_norm = (r.i * r.i + r.j * r.j + r.k * r.k).sqrt();
    2.0 * vec_norm.atan2(r.w.abs())
}

fn canonical_quat(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else if q.i != 0.0 {
        q.i < 0.0
    } else if q.j != 0.0 {
        q.j < 0.0
    } else {
        q.k < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Standard DH row for one joint plus its limit interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct JointParams {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub limit_lo: f64,
    pub limit_hi: f64,
}

impl JointParams {
    pub fn new(a: f64, d: f64, alpha: f64) -> Self {
        Self { a, d, alpha, limit_lo: -2.0 * PI, limit_hi: 2.0 * PI }
    }
}

/// Serial-chain kinematic model: six DH rows, limits and link capsule radii.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KinematicModel {
    pub joints: [JointParams; JOINT_COUNT],
    /// Capsule radius per arm segment. Segment `i` spans joint-frame origins
    /// `o_i` to `o_{i+1}`; segment 0 is the static base column.
    pub link_radii: [f64; JOINT_COUNT],
}

impl KinematicModel {
    /// Nominal UR10 parameters (published values, not a per-unit calibration).
    pub fn ur10() -> Self {
        Self {
            joints: [
                JointParams::new(0.0, 0.1273, PI / 2.0),
                JointParams::new(-0.612, 0.0, 0.0),
                JointParams::new(-0.5723, 0.0, 0.0),
                JointParams::new(0.0, 0.163941, PI / 2.0),
                JointParams::new(0.0, 0.1157, -PI / 2.0),
                JointParams::new(0.0, 0.0922, 0.0),
            ],
            link_radii: [0.09, 0.08, 0.055, 0.045, 0.045, 0.045],
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for j in &self.joints {
            if !(j.a.is_finite() && j.d.is_finite() && j.alpha.is_finite()) {
                return Err(KinematicsError::NonFiniteParameter("dh"));
            }
            if !(j.limit_lo.is_finite() && j.limit_hi.is_finite()) || j.limit_lo >= j.limit_hi {
                return Err(KinematicsError::NonFiniteParameter("limits"));
            }
        }
        if self.link_radii.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(KinematicsError::NonFiniteParameter("link_radii"));
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        for (i, (v, j)) in q.angles().iter().zip(self.joints.iter()).enumerate() {
            if *v < j.limit_lo || *v > j.limit_hi {
                return Err(KinematicsError::LimitViolation {
                    joint: i,
                    value: *v,
                    lo: j.limit_lo,
                    hi: j.limit_hi,
                });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.check_limits(q).is_ok()
    }

    fn joint_transform(&self, joint: usize, theta: f64) -> Isometry3<f64> {
        let p = &self.joints[joint];
        let screw_z = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, p.d),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta),
        );
        let screw_x = Isometry3::from_parts(
            Translation3::new(p.a, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), p.alpha),
        );
        screw_z * screw_x
    }

    /// Transforms of frames 0..=6 in the base frame; frame 0 is the identity.
    pub fn joint_frames(&self, q: &JointConfig) -> [Isometry3<f64>; JOINT_COUNT + 1] {
        let mut frames = [Isometry3::identity(); JOINT_COUNT + 1];
        let mut t = Isometry3::identity();
        for i in 0..JOINT_COUNT {
            t *= self.joint_transform(i, q.angle(i));
            frames[i + 1] = t;
        }
        frames
    }

    /// Origins of frames 0..=6, the capsule segment endpoints of the arm.
    pub fn frame_origins(&self, q: &JointConfig) -> [Point3<f64>; JOINT_COUNT + 1] {
        let frames = self.joint_frames(q);
        let mut pts = [Point3::origin(); JOINT_COUNT + 1];
        for (p, f) in pts.iter_mut().zip(frames.iter()) {
            *p = Point3::from(f.translation.vector);
        }
        pts
    }

    /// Flange pose without a limit check; hot-path companion of
    /// [`forward_kinematics`].
    pub fn fk_unchecked(&self, q: &JointConfig) -> Pose {
        Pose::from_isometry(&self.joint_frames(q)[JOINT_COUNT])
    }

    /// Conservative per-joint motion bound: a change of `dq` radians on joint
    /// `j` moves no link-surface point farther than `reach_radii[j] * |dq|`.
    pub fn reach_radii(&self) -> [f64; JOINT_COUNT] {
        let r_max = self.link_radii.iter().cloned().fold(0.0, f64::max);
        let mut radii = [0.0; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let chain: f64 = self.joints[j + 1..].iter().map(|p| p.a.abs() + p.d.abs()).sum();
            radii[j] = chain + r_max;
        }
        radii
    }
}

/// End-effector pose in the base frame for a configuration within limits.
pub fn forward_kinematics(model: &KinematicModel, q: &JointConfig) -> Result<Pose, KinematicsError> {
    model.check_limits(q)?;
    Ok(model.fk_unchecked(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_maps_to_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(2.0 * PI), 0.0, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.1), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_canonical_sign() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 3.0);
        let pose = Pose::new(Point3::origin(), q);
        assert!(pose.orientation().w >= 0.0);
        let flipped = UnitQuaternion::new_unchecked(-q.into_inner());
        let pose2 = Pose::new(Point3::origin(), flipped);
        assert_eq!(pose.orientation(), pose2.orientation());
    }

    #[test]
    fn limit_violation_reported() {
        let model = KinematicModel::ur10();
        let q = JointConfig::new([7.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            forward_kinematics(&model, &q),
            Err(KinematicsError::LimitViolation { joint: 0, .. })
        ));
    }

    #[test]
    fn base_yaw_rotates_zero_pose_about_z() {
        let model = KinematicModel::ur10();
        let zero = model.fk_unchecked(&JointConfig::zeros());
        let yawed = model.fk_unchecked(&JointConfig::new([PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI / 2.0);
        let expect = rot * zero.position;
        assert_relative_eq!(yawed.position.x, expect.x, epsilon = 1e-12);
        assert_relative_eq!(yawed.position.y, expect.y, epsilon = 1e-12);
        assert_relative_eq!(yawed.position.z, expect.z, epsilon = 1e-12);
    }

    #[test]
    fn wrapped_distance_ignores_branch_cuts() {
        let a = JointConfig::new([2.0 * PI - 0.01, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = JointConfig::new([0.01, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(a.distance(&b), 0.02, epsilon = 1e-12);
    }
}
