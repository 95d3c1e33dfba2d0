//! Motion-planning toolkit for a 6-DOF arm unloading deep trolleys: forward
//! and closed-form inverse kinematics, a primitive collision world, an RRT
//! baseline planner, a precomputed supporting-trajectory database with an
//! online lookup-and-correct fast path, point-cloud perception math, and a
//! pick-place episode harness with a benchmark comparing the fast path
//! against fresh planning.

pub mod benchmark;
pub mod boosted;
pub mod collision;
pub mod config;
pub mod kinematics;
pub mod perception;
pub mod rrt;
pub mod task_env;
pub mod trajectory_db;

pub use boosted::{boosted_plan, check_proximity, correct_trajectory, PlanResult, PlanSource};
pub use collision::{build_world, CollisionWorld, SceneConfig};
pub use config::Config;
pub use kinematics::{
    forward_kinematics, ik_closest, inverse_kinematics, JointConfig, KinematicModel, Pose,
};
pub use rrt::{plan_to_config, plan_to_pose, shortcut, PlannerParams, Trajectory};
pub use trajectory_db::{AreaOfInterest, TrajectoryDb};
