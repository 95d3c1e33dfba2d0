//! Online operation mode: serve a planning query from the supporting
//! trajectory database when the guards admit it, correct the retrieved
//! trajectory's endpoints, and degrade to fresh sampling-based planning on
//! any miss. Queries answer in the millisecond regime when the database
//! hits; the source tag records which path produced the answer.

use crate::collision::CollisionWorld;
use crate::kinematics::{ik_closest, JointConfig, KinematicModel, Pose, JOINT_COUNT};
use crate::rrt::{plan_to_pose, PlannerParams, Trajectory};
use crate::trajectory_db::{lookup_backward, lookup_forward, TrajectoryDb};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Endpoint tolerances a served trajectory must meet.
pub const ENDPOINT_POS_TOL: f64 = 1e-4;
pub const ENDPOINT_ANG_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ProximityParams {
    /// Max-abs wrapped per-joint deviation from home admitting the forward
    /// fast path.
    pub joint_tolerance: f64,
    /// Pose tolerances on "target near home" admitting the backward path.
    pub pose_position_tolerance: f64,
    pub pose_angle_tolerance: f64,
}

impl Default for ProximityParams {
    fn default() -> Self {
        Self {
            joint_tolerance: 0.05,
            pose_position_tolerance: 0.05,
            pose_angle_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSource {
    ForwardDb,
    BackwardDb,
    FreshRrt,
}

impl PlanSource {
    pub fn tag(&self) -> &'static str {
        match self {
            PlanSource::ForwardDb => "forward-db",
            PlanSource::BackwardDb => "backward-db",
            PlanSource::FreshRrt => "fresh-rrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Outcome of one boosted query. `trajectory` is `None` only when even the
/// fresh fallback failed; the source tag always reflects the path that
/// produced the answer (or the fallback that was attempted).
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Option<Trajectory>,
    pub source: PlanSource,
    pub lookup_time: Duration,
    pub correction_time: Duration,
    pub total_time: Duration,
}

impl PlanResult {
    pub fn served_from_db(&self) -> bool {
        self.trajectory.is_some() && self.source != PlanSource::FreshRrt
    }
}

/// True iff every joint is within the tolerance of home, wrapped, closed
/// interval.
pub fn check_proximity(q: &JointConfig, home: &JointConfig, params: &ProximityParams) -> bool {
    q.max_abs_distance(home, &[1.0; JOINT_COUNT]) <= params.joint_tolerance
}

/// Endpoint correction of a supporting trajectory.
///
/// Forward: prepend the current configuration and append the IK solution for
/// the exact target that is closest to the trajectory end. Backward: prepend
/// only. Both new segments are collision-checked at `resolution`; any
/// failure returns `None` and the caller falls back to fresh planning.
pub fn correct_trajectory(
    world: &CollisionWorld,
    model: &KinematicModel,
    supporting: &Trajectory,
    target: &Pose,
    current: &JointConfig,
    direction: Direction,
    resolution: f64,
) -> Option<Trajectory> {
    let mut waypoints = Vec::with_capacity(supporting.waypoints().len() + 2);
    waypoints.push(*current);
    waypoints.extend_from_slice(supporting.waypoints());
    if direction == Direction::Forward {
        let tail = ik_closest(model, target, supporting.last(), world)?;
        waypoints.push(tail);
    }
    let corrected = Trajectory::from_dedup(waypoints);

    // Only the segments this correction introduced need re-checking; the
    // supporting trajectory was validated against the fingerprinted world.
    if corrected.waypoints().len() >= 2 {
        let first_pair = &corrected.waypoints()[..2];
        if first_pair[0].raw_distance(&first_pair[1]) > 0.0
            && current.raw_distance(supporting.first()) > 1e-8
            && world.segment_in_collision(model, &first_pair[0], &first_pair[1], resolution)
        {
            return None;
        }
        if direction == Direction::Forward {
            let n = corrected.waypoints().len();
            let last_pair = &corrected.waypoints()[n - 2..];
            if supporting.last().raw_distance(&last_pair[1]) > 1e-8
                && world.segment_in_collision(model, &last_pair[0], &last_pair[1], resolution)
            {
                return None;
            }
        }
    }
    Some(corrected)
}

/// Which guard of the operation-mode algorithm admits this query, if any.
pub fn query_eligibility(
    db: &TrajectoryDb,
    model: &KinematicModel,
    current: &JointConfig,
    target: &Pose,
    prox: &ProximityParams,
) -> Option<Direction> {
    if db.area_containing(&target.position).is_some() && check_proximity(current, &db.home, prox)
    {
        return Some(Direction::Forward);
    }
    let fk_current = model.fk_unchecked(current);
    let fk_home = model.fk_unchecked(&db.home);
    if db.area_containing(&fk_current.position).is_some()
        && target.is_close(&fk_home, prox.pose_position_tolerance, prox.pose_angle_tolerance)
    {
        return Some(Direction::Backward);
    }
    None
}

/// Answer a planning query: database lookup plus endpoint correction on a
/// guard hit, fresh planning otherwise. Never returns without a result
/// structure; a `None` trajectory with a fresh tag is an explicit planning
/// failure.
pub fn boosted_plan(
    db: &TrajectoryDb,
    world: &CollisionWorld,
    model: &KinematicModel,
    current: &JointConfig,
    target: &Pose,
    planner: &PlannerParams,
    prox: &ProximityParams,
) -> PlanResult {
    let t0 = Instant::now();
    let mut lookup_time = Duration::ZERO;
    let mut correction_time = Duration::ZERO;

    if let Some(direction) = query_eligibility(db, model, current, target, prox) {
        let t_lookup = Instant::now();
        let hit = match direction {
            Direction::Forward => lookup_forward(db, target),
            Direction::Backward => lookup_backward(db, model, current),
        };
        lookup_time = t_lookup.elapsed();

        if let Some((entry, _)) = hit {
            let supporting = match direction {
                Direction::Forward => &entry.forward,
                Direction::Backward => &entry.backward,
            };
            let t_corr = Instant::now();
            let corrected = correct_trajectory(
                world,
                model,
                supporting,
                target,
                current,
                direction,
                planner.collision_resolution,
            );
            correction_time = t_corr.elapsed();

            if let Some(traj) = corrected {
                let fk_end = model.fk_unchecked(traj.last());
                if fk_end.is_close(target, ENDPOINT_POS_TOL, ENDPOINT_ANG_TOL) {
                    return PlanResult {
                        trajectory: Some(traj),
                        source: match direction {
                            Direction::Forward => PlanSource::ForwardDb,
                            Direction::Backward => PlanSource::BackwardDb,
                        },
                        lookup_time,
                        correction_time,
                        total_time: t0.elapsed(),
                    };
                }
            }
        }
    }

    let trajectory = match plan_to_pose(world, model, current, target, planner) {
        Ok(Some(p)) => Some(p.trajectory),
        _ => None,
    };
    PlanResult {
        trajectory,
        source: PlanSource::FreshRrt,
        lookup_time,
        correction_time,
        total_time: t0.elapsed(),
    }
}

/// Fresh-only baseline with the same result shape, for paired benchmarking.
pub fn fresh_plan(
    world: &CollisionWorld,
    model: &KinematicModel,
    current: &JointConfig,
    target: &Pose,
    planner: &PlannerParams,
) -> PlanResult {
    let t0 = Instant::now();
    let trajectory = match plan_to_pose(world, model, current, target, planner) {
        Ok(Some(p)) => Some(p.trajectory),
        _ => None,
    };
    PlanResult {
        trajectory,
        source: PlanSource::FreshRrt,
        lookup_time: Duration::ZERO,
        correction_time: Duration::ZERO,
        total_time: t0.elapsed(),
    }
}
