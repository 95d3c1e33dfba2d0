//! Static collision world for planning: trolley, table and ground as
//! primitive solids, arm links as capsules between consecutive joint-frame
//! origins, with a configurable inflation margin.

mod primitives;

pub use primitives::{
    point_box_distance, point_cylinder_distance, segment_segment_distance, Primitive,
};

use crate::kinematics::{JointConfig, KinematicModel, Pose, JOINT_COUNT};
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene dimension: {0}")]
    InvalidDimension(&'static str),
    #[error("{0} interpenetrates the robot base mount")]
    BaseMountConflict(&'static str),
}

/// Furniture layout in the robot base frame (optionally offset by the robot
/// base pose). Defaults model the cash-center cell: an open-top trolley beside
/// the table the arm is mounted on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SceneConfig {
    /// Trolley interior center in the x/y plane.
    pub trolley_center_xy: [f64; 2],
    /// Interior width/depth/height of the trolley.
    pub trolley_inner: [f64; 3],
    pub wall_thickness: f64,
    /// Top face of the (possibly raised) trolley floor, base frame.
    pub trolley_floor_z: f64,
    pub table_center_xy: [f64; 2],
    pub table_dims: [f64; 3],
    /// Table top face height; the robot is mounted at z = 0.
    pub table_top_z: f64,
    pub ground_z: f64,
    pub margin: f64,
    /// Robot base pose in the world frame; obstacles above are expressed in
    /// the same world frame and converted to base coordinates when building.
    pub robot_base_xyz: [f64; 3],
    pub robot_base_yaw: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            trolley_center_xy: [0.60, 0.0],
            trolley_inner: [0.5, 0.7, 0.8],
            wall_thickness: 0.02,
            trolley_floor_z: -0.63,
            table_center_xy: [-0.24, 0.0],
            table_dims: [0.88, 0.88, 0.77],
            table_top_z: 0.0,
            // The base sits on a 5 cm pedestal above the table, which puts
            // the trolley rim level with the mounting plane.
            ground_z: -0.82,
            margin: 0.005,
            robot_base_xyz: [0.0; 3],
            robot_base_yaw: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.trolley_inner.iter().any(|d| *d <= 0.0) {
            return Err(SceneError::InvalidDimension("trolley_inner"));
        }
        if self.table_dims.iter().any(|d| *d <= 0.0) {
            return Err(SceneError::InvalidDimension("table_dims"));
        }
        if self.wall_thickness <= 0.0 {
            return Err(SceneError::InvalidDimension("wall_thickness"));
        }
        if self.margin < 0.0 {
            return Err(SceneError::InvalidDimension("margin"));
        }
        if self.trolley_floor_z <= self.ground_z {
            return Err(SceneError::InvalidDimension("trolley_floor_z"));
        }
        let rim = self.trolley_rim_z();
        if self.trolley_floor_z >= rim {
            return Err(SceneError::InvalidDimension("trolley_floor_z above rim"));
        }
        Ok(())
    }

    /// Height of the trolley wall top edge.
    pub fn trolley_rim_z(&self) -> f64 {
        self.ground_z + self.wall_thickness + self.trolley_inner[2]
    }

    fn base_in_world(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.robot_base_xyz[0], self.robot_base_xyz[1], self.robot_base_xyz[2]),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.robot_base_yaw),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Obstacle {
    pub name: &'static str,
    pub shape: Primitive,
}

/// Immutable set of static obstacles plus the collision margin; queries place
/// the arm capsules from a configuration and test the pairs.
#[derive(Debug, Clone)]
pub struct CollisionWorld {
    obstacles: Vec<Obstacle>,
    pub margin: f64,
}

/// Trolley (4 walls + floor, open top), table and ground plane.
pub fn build_world(scene: &SceneConfig, model: &KinematicModel) -> Result<CollisionWorld, SceneError> {
    scene.validate()?;
    model.validate().map_err(|_| SceneError::InvalidDimension("kinematic model"))?;

    let world_to_base = scene.base_in_world().inverse();
    let place = |center: Point3<f64>, half: Vector3<f64>| Primitive::Box {
        pose: world_to_base * Isometry3::translation(center.x, center.y, center.z),
        half,
    };

    let [cx, cy] = scene.trolley_center_xy;
    let [ix, iy, _] = scene.trolley_inner;
    let wt = scene.wall_thickness;
    let rim = scene.trolley_rim_z();
    let wall_zc = 0.5 * (scene.ground_z + rim);
    let wall_hh = 0.5 * (rim - scene.ground_z);

    let mut obstacles = Vec::with_capacity(7);
    for (name, center, half) in [
        (
            "trolley_wall_xp",
            Point3::new(cx + 0.5 * (ix + wt), cy, wall_zc),
            Vector3::new(0.5 * wt, 0.5 * iy + wt, wall_hh),
        ),
        (
            "trolley_wall_xn",
            Point3::new(cx - 0.5 * (ix + wt), cy, wall_zc),
            Vector3::new(0.5 * wt, 0.5 * iy + wt, wall_hh),
        ),
        (
            "trolley_wall_yp",
            Point3::new(cx, cy + 0.5 * (iy + wt), wall_zc),
            Vector3::new(0.5 * ix, 0.5 * wt, wall_hh),
        ),
        (
            "trolley_wall_yn",
            Point3::new(cx, cy - 0.5 * (iy + wt), wall_zc),
            Vector3::new(0.5 * ix, 0.5 * wt, wall_hh),
        ),
        (
            // Solid from the ground up to the configured floor height so a
            // raised floor conservatively fills the volume below it.
            "trolley_floor",
            Point3::new(cx, cy, 0.5 * (scene.ground_z + scene.trolley_floor_z)),
            Vector3::new(0.5 * ix, 0.5 * iy, 0.5 * (scene.trolley_floor_z - scene.ground_z)),
        ),
        (
            "table",
            Point3::new(
                scene.table_center_xy[0],
                scene.table_center_xy[1],
                scene.table_top_z - 0.5 * scene.table_dims[2],
            ),
            Vector3::new(0.5 * scene.table_dims[0], 0.5 * scene.table_dims[1], 0.5 * scene.table_dims[2]),
        ),
        (
            "ground",
            Point3::new(0.0, 0.0, scene.ground_z - 0.05),
            Vector3::new(3.0, 3.0, 0.05),
        ),
    ] {
        obstacles.push(Obstacle { name, shape: place(center, half) });
    }

    let world = CollisionWorld { obstacles, margin: scene.margin };
    world.check_base_mount(scene, model)?;
    Ok(world)
}

impl CollisionWorld {
    pub fn from_parts(obstacles: Vec<Obstacle>, margin: f64) -> Self {
        Self { obstacles, margin }
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    /// The trolley must stay clear of the base mount column; the table may
    /// carry it but must not rise above the mounting plane.
    fn check_base_mount(&self, scene: &SceneConfig, model: &KinematicModel) -> Result<(), SceneError> {
        if scene.table_top_z > 1e-9 {
            return Err(SceneError::BaseMountConflict("table"));
        }
        let mount_a = Point3::new(0.0, 0.0, 0.0);
        let mount_b = Point3::new(0.0, 0.0, model.joints[0].d.max(0.05));
        for obs in &self.obstacles {
            if obs.name.starts_with("trolley")
                && obs.shape.distance_to_segment(&mount_a, &mount_b) <= model.link_radii[0]
            {
                return Err(SceneError::BaseMountConflict("trolley"));
            }
        }
        Ok(())
    }

    /// True iff any inflated link capsule touches an obstacle or a
    /// non-adjacent link. Segment 0 (base column) only participates in
    /// self-collision; relative to the world it never moves.
    pub fn config_in_collision(&self, model: &KinematicModel, q: &JointConfig) -> bool {
        let o = model.frame_origins(q);
        for i in 1..JOINT_COUNT {
            let r = model.link_radii[i] + self.margin;
            for obs in &self.obstacles {
                if obs.shape.intersects_capsule(&o[i], &o[i + 1], r) {
                    return true;
                }
            }
        }
        for i in 0..JOINT_COUNT {
            for j in (i + 2)..JOINT_COUNT {
                let thr = model.link_radii[i] + model.link_radii[j] + self.margin;
                if segment_segment_distance(&o[i], &o[i + 1], &o[j], &o[j + 1]) <= thr {
                    return true;
                }
            }
        }
        false
    }

    /// Collision test along the straight joint-space segment from `a` to `b`.
    ///
    /// The sample count is chosen so no link-surface point moves more than
    /// `resolution` between consecutive samples (joint deltas times reach
    /// radii) and is rounded up to a power of two, which makes coarser sample
    /// sets subsets of finer ones: refining the resolution can only turn a
    /// free verdict into a colliding one, never the reverse.
    pub fn segment_in_collision(
        &self,
        model: &KinematicModel,
        a: &JointConfig,
        b: &JointConfig,
        resolution: f64,
    ) -> bool {
        assert!(resolution > 0.0, "resolution must be positive");
        // Canonical direction so both argument orders sample identical configs.
        let (a, b) = if lex_le(a, b) { (a, b) } else { (b, a) };

        if self.config_in_collision(model, a) || self.config_in_collision(model, b) {
            return true;
        }
        let radii = model.reach_radii();
        let bound: f64 = a
            .angles()
            .iter()
            .zip(b.angles().iter())
            .zip(radii.iter())
            .map(|((x, y), r)| (x - y).abs() * r)
            .sum();
        if bound == 0.0 {
            return false;
        }
        let steps = ((bound / resolution).ceil() as u64).max(1).next_power_of_two();

        // Coarse-to-fine bisection order for early exits on colliding segments.
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((0u64, steps));
        while let Some((lo, hi)) = queue.pop_front() {
            if hi - lo <= 1 {
                continue;
            }
            let mid = lo + (hi - lo) / 2;
            let q = a.lerp(b, mid as f64 / steps as f64);
            if self.config_in_collision(model, &q) {
                return true;
            }
            queue.push_back((lo, mid));
            queue.push_back((mid, hi));
        }
        false
    }
}

fn lex_le(a: &JointConfig, b: &JointConfig) -> bool {
    for (x, y) in a.angles().iter().zip(b.angles().iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    true
}

/// Convenience: flange pose reachable and collision-free check used by tests.
pub fn pose_reachable_free(
    model: &KinematicModel,
    world: &CollisionWorld,
    target: &Pose,
) -> bool {
    crate::kinematics::inverse_kinematics(model, target)
        .iter()
        .any(|q| !world.config_in_collision(model, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_world_has_seven_shapes() {
        let world = build_world(&SceneConfig::default(), &KinematicModel::ur10()).unwrap();
        assert_eq!(world.obstacles().len(), 7);
    }

    #[test]
    fn zero_wall_thickness_rejected() {
        let scene = SceneConfig { wall_thickness: 0.0, ..SceneConfig::default() };
        assert_eq!(
            build_world(&scene, &KinematicModel::ur10()).unwrap_err(),
            SceneError::InvalidDimension("wall_thickness")
        );
    }

    #[test]
    fn raised_floor_top_face_matches_height() {
        let scene = SceneConfig { trolley_floor_z: -0.20, ..SceneConfig::default() };
        let world = build_world(&scene, &KinematicModel::ur10()).unwrap();
        let floor = world
            .obstacles()
            .iter()
            .find(|o| o.name == "trolley_floor")
            .unwrap();
        let Primitive::Box { pose, half } = &floor.shape else { panic!() };
        let top = pose.translation.z + half.z;
        assert!((top - (-0.20)).abs() < 1e-12);
    }

    #[test]
    fn zero_config_clear_of_default_furniture() {
        let model = KinematicModel::ur10();
        let world = build_world(&SceneConfig::default(), &model).unwrap();
        assert!(!world.config_in_collision(&model, &JointConfig::zeros()));
    }

    #[test]
    fn huge_margin_collides_everywhere() {
        let model = KinematicModel::ur10();
        let scene = SceneConfig { margin: 10.0, ..SceneConfig::default() };
        let world = build_world(&scene, &model).unwrap();
        assert!(world.config_in_collision(&model, &JointConfig::zeros()));
    }

    #[test]
    fn degenerate_segment_free() {
        let model = KinematicModel::ur10();
        let world = build_world(&SceneConfig::default(), &model).unwrap();
        let q = JointConfig::zeros();
        assert!(!world.segment_in_collision(&model, &q, &q, 0.005));
    }
}
