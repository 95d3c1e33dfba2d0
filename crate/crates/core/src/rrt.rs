//! Baseline sampling planner: plain single-tree RRT with goal-biased
//! sampling and shortcut smoothing. Deterministic given the seed in
//! [`PlannerParams`]; every planning call reports its wall-clock duration
//! for the benchmark harness.

use crate::collision::CollisionWorld;
use crate::kinematics::{
    JointConfig, KinematicModel, KinematicsError, Pose, JOINT_COUNT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start configuration in collision")]
    StartInCollision,
    #[error("goal configuration in collision")]
    GoalInCollision,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("invalid planner parameter: {0}")]
    InvalidParams(&'static str),
}

/// Ordered joint-space waypoints; consecutive waypoints differ and every
/// consecutive pair was collision-checked at build resolution. A degenerate
/// query (goal equals start) yields a single-waypoint trajectory flagged
/// trivial.
#[derive(Debug, Clone)]
pub struct Trajectory {
    waypoints: Vec<JointConfig>,
    trivial: bool,
    pose_cache: Option<Vec<Pose>>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.waypoints == other.waypoints && self.trivial == other.trivial
    }
}

impl Trajectory {
    pub fn new(waypoints: Vec<JointConfig>) -> Result<Self, &'static str> {
        if waypoints.len() < 2 {
            return Err("trajectory needs at least two waypoints");
        }
        for pair in waypoints.windows(2) {
            if pair[0].raw_distance(&pair[1]) == 0.0 {
                return Err("consecutive waypoints must differ");
            }
        }
        Ok(Self { waypoints, trivial: false, pose_cache: None })
    }

    pub fn trivial(q: JointConfig) -> Self {
        Self { waypoints: vec![q], trivial: true, pose_cache: None }
    }

    /// Builds from raw waypoints, merging consecutive near-duplicates; a list
    /// that collapses to one waypoint becomes a trivial trajectory.
    pub fn from_dedup(waypoints: Vec<JointConfig>) -> Self {
        let mut out: Vec<JointConfig> = Vec::with_capacity(waypoints.len());
        for w in waypoints {
            if out.last().map_or(true, |l| l.raw_distance(&w) > 1e-8) {
                out.push(w);
            }
        }
        if out.len() < 2 {
            Self::trivial(out.pop().expect("at least one waypoint"))
        } else {
            Self { waypoints: out, trivial: false, pose_cache: None }
        }
    }

    pub fn waypoints(&self) -> &[JointConfig] {
        &self.waypoints
    }

    pub fn first(&self) -> &JointConfig {
        self.waypoints.first().expect("non-empty")
    }

    pub fn last(&self) -> &JointConfig {
        self.waypoints.last().expect("non-empty")
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// Total raw joint-space length.
    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].raw_distance(&w[1])).sum()
    }

    pub fn reversed(&self) -> Self {
        let mut waypoints = self.waypoints.clone();
        waypoints.reverse();
        Self { waypoints, trivial: self.trivial, pose_cache: None }
    }

    /// Fill the per-waypoint end-effector pose cache.
    pub fn with_pose_cache(mut self, model: &KinematicModel) -> Self {
        self.pose_cache =
            Some(self.waypoints.iter().map(|q| model.fk_unchecked(q)).collect());
        self
    }

    pub fn pose_cache(&self) -> Option<&[Pose]> {
        self.pose_cache.as_deref()
    }

    /// Re-check every consecutive pair at the given resolution.
    pub fn is_collision_free(
        &self,
        world: &CollisionWorld,
        model: &KinematicModel,
        resolution: f64,
    ) -> bool {
        if self.waypoints.len() == 1 {
            return !world.config_in_collision(model, &self.waypoints[0]);
        }
        self.waypoints
            .windows(2)
            .all(|w| !world.segment_in_collision(model, &w[0], &w[1], resolution))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PlannerParams {
    /// Extension step in radians.
    pub step: f64,
    /// Probability of sampling the growth target instead of a uniform config.
    pub goal_bias: f64,
    pub max_iterations: u64,
    pub seed: u64,
    pub shortcut_passes: u32,
    /// Collision-check resolution in meters of link-surface motion.
    pub collision_resolution: f64,
    /// Grow a second tree from the goal. Plain single-tree RRT satisfies the
    /// same contract but needs orders of magnitude more samples to thread the
    /// trolley opening.
    pub bidirectional: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            step: 0.1,
            goal_bias: 0.1,
            max_iterations: 50_000,
            seed: 0,
            shortcut_passes: 100,
            collision_resolution: 0.005,
            bidirectional: true,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.step > 0.0) {
            return Err(PlanError::InvalidParams("step"));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(PlanError::InvalidParams("goal_bias"));
        }
        if self.max_iterations == 0 {
            return Err(PlanError::InvalidParams("max_iterations"));
        }
        if !(self.collision_resolution > 0.0) {
            return Err(PlanError::InvalidParams("collision_resolution"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A planned trajectory with the wall-clock time spent producing it.
#[derive(Debug, Clone)]
pub struct PlannedPath {
    pub trajectory: Trajectory,
    pub duration: Duration,
}

struct Node {
    q: JointConfig,
    parent: Option<usize>,
}

struct Tree {
    nodes: Vec<Node>,
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

impl Tree {
    fn rooted(q: JointConfig) -> Self {
        Self { nodes: vec![Node { q, parent: None }] }
    }

    fn forest(roots: &[JointConfig]) -> Self {
        Self { nodes: roots.iter().map(|q| Node { q: *q, parent: None }).collect() }
    }

    fn nearest(&self, q: &JointConfig) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.q.raw_distance(q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn extend(
        &mut self,
        target: &JointConfig,
        world: &CollisionWorld,
        model: &KinematicModel,
        params: &PlannerParams,
    ) -> Extend {
        let near_idx = self.nearest(target);
        let near = self.nodes[near_idx].q;
        let dist = near.raw_distance(target);
        if dist == 0.0 {
            return Extend::Reached(near_idx);
        }
        let (q_new, reached) = if dist <= params.step {
            (*target, true)
        } else {
            (near.lerp(target, params.step / dist), false)
        };
        if world.segment_in_collision(model, &near, &q_new, params.collision_resolution) {
            return Extend::Trapped;
        }
        let idx = self.nodes.len();
        self.nodes.push(Node { q: q_new, parent: Some(near_idx) });
        if reached {
            Extend::Reached(idx)
        } else {
            Extend::Advanced(idx)
        }
    }

    fn connect(
        &mut self,
        target: &JointConfig,
        world: &CollisionWorld,
        model: &KinematicModel,
        params: &PlannerParams,
    ) -> Extend {
        loop {
            match self.extend(target, world, model, params) {
                Extend::Advanced(_) => continue,
                other => return other,
            }
        }
    }

    fn path_to_root(&self, mut idx: usize) -> Vec<JointConfig> {
        let mut out = vec![self.nodes[idx].q];
        while let Some(p) = self.nodes[idx].parent {
            idx = p;
            out.push(self.nodes[p].q);
        }
        out
    }
}

fn sample_config(model: &KinematicModel, rng: &mut ChaCha8Rng) -> JointConfig {
    let mut a = [0.0; JOINT_COUNT];
    for (v, j) in a.iter_mut().zip(model.joints.iter()) {
        *v = rng.gen_range(j.limit_lo..=j.limit_hi);
    }
    JointConfig::new(a)
}

/// Collision-free joint-space trajectory from `start` to `goal`; `None` when
/// the iteration budget runs out.
pub fn plan_to_config(
    world: &CollisionWorld,
    model: &KinematicModel,
    start: &JointConfig,
    goal: &JointConfig,
    params: &PlannerParams,
) -> Result<Option<PlannedPath>, PlanError> {
    let t0 = Instant::now();
    params.validate()?;
    model.check_limits(start)?;
    model.check_limits(goal)?;
    if world.config_in_collision(model, start) {
        return Err(PlanError::StartInCollision);
    }
    if world.config_in_collision(model, goal) {
        return Err(PlanError::GoalInCollision);
    }

    if start.raw_distance(goal) == 0.0 {
        return Ok(Some(PlannedPath { trajectory: Trajectory::trivial(*start), duration: t0.elapsed() }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let goals = [*goal];
    let waypoints = if params.bidirectional {
        grow_connect(world, model, start, &goals, params, &mut rng)
    } else {
        grow_single(world, model, start, &goals, params, &mut rng)
    };
    Ok(waypoints.map(|wps| {
        let trajectory = shortcut_waypoints(world, model, wps, params, &mut rng);
        PlannedPath { trajectory, duration: t0.elapsed() }
    }))
}

fn grow_single(
    world: &CollisionWorld,
    model: &KinematicModel,
    start: &JointConfig,
    goals: &[JointConfig],
    params: &PlannerParams,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<JointConfig>> {
    let mut tree = Tree::rooted(*start);
    for it in 0..params.max_iterations {
        let q_rand = if rng.gen_bool(params.goal_bias.clamp(0.0, 1.0)) {
            goals[(it % goals.len() as u64) as usize]
        } else {
            sample_config(model, rng)
        };
        if let Extend::Reached(idx) | Extend::Advanced(idx) =
            tree.extend(&q_rand, world, model, params)
        {
            let q_new = tree.nodes[idx].q;
            if goals.iter().any(|g| q_new.raw_distance(g) == 0.0) {
                let mut waypoints = tree.path_to_root(idx);
                waypoints.reverse();
                return Some(waypoints);
            }
        }
    }
    None
}

/// Bidirectional search; the goal tree starts as a forest rooted at every
/// goal configuration, so the first connectable goal wins.
fn grow_connect(
    world: &CollisionWorld,
    model: &KinematicModel,
    start: &JointConfig,
    goals: &[JointConfig],
    params: &PlannerParams,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<JointConfig>> {
    let mut tree_a = Tree::rooted(*start);
    let mut tree_b = Tree::forest(goals);
    let mut a_is_start = true;
    for it in 0..params.max_iterations {
        let q_rand = if rng.gen_bool(params.goal_bias.clamp(0.0, 1.0)) {
            let roots = if a_is_start { goals.len() } else { 1 };
            tree_b.nodes[(it % roots as u64) as usize].q
        } else {
            sample_config(model, rng)
        };
        if let Extend::Reached(idx) | Extend::Advanced(idx) =
            tree_a.extend(&q_rand, world, model, params)
        {
            let q_new = tree_a.nodes[idx].q;
            if let Extend::Reached(b_idx) = tree_b.connect(&q_new, world, model, params) {
                let mut from_a = tree_a.path_to_root(idx);
                from_a.reverse();
                let from_b = tree_b.path_to_root(b_idx);
                let mut waypoints = from_a;
                waypoints.extend(from_b.into_iter().skip(1));
                if !a_is_start {
                    waypoints.reverse();
                }
                return Some(waypoints);
            }
        }
        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }
    None
}

/// Joint-space planning to a flange pose; `None` when no collision-free IK
/// solution exists or planning fails.
///
/// The goal tree is seeded with every collision-free IK solution (each on
/// the canonical branch and on the branch nearest the start), so the search
/// reaches the pose through whichever arm posture connects first. Planning
/// to the single joint-space-nearest solution was measured to strand the
/// search in a disconnected pocket on roughly half of in-trolley grasps.
pub fn plan_to_pose(
    world: &CollisionWorld,
    model: &KinematicModel,
    start: &JointConfig,
    target: &Pose,
    params: &PlannerParams,
) -> Result<Option<PlannedPath>, PlanError> {
    let t0 = Instant::now();
    params.validate()?;
    model.check_limits(start)?;
    if world.config_in_collision(model, start) {
        return Err(PlanError::StartInCollision);
    }
    let fk = model.fk_unchecked(start);
    if fk.position_distance(target) < 1e-9 && fk.angular_distance(target) < 1e-9 {
        return Ok(Some(PlannedPath { trajectory: Trajectory::trivial(*start), duration: t0.elapsed() }));
    }
    let goals = pose_goal_set(world, model, target, start);
    if goals.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let waypoints = if params.bidirectional {
        grow_connect(world, model, start, &goals, params, &mut rng)
    } else {
        grow_single(world, model, start, &goals, params, &mut rng)
    };
    Ok(waypoints.map(|wps| {
        let trajectory = shortcut_waypoints(world, model, wps, params, &mut rng);
        PlannedPath { trajectory, duration: t0.elapsed() }
    }))
}

/// Collision-free goal configurations for a pose, nearest-first.
pub fn pose_goal_set(
    world: &CollisionWorld,
    model: &KinematicModel,
    target: &Pose,
    reference: &JointConfig,
) -> Vec<JointConfig> {
    let mut goals: Vec<JointConfig> = Vec::new();
    for s in crate::kinematics::inverse_kinematics(model, target) {
        for cand in [s, crate::kinematics::rebranch_toward(model, &s, reference)] {
            if world.config_in_collision(model, &cand) {
                continue;
            }
            if goals.iter().all(|g| g.raw_distance(&cand) > 1e-9) {
                goals.push(cand);
            }
        }
    }
    goals.sort_by(|a, b| {
        a.distance(reference)
            .total_cmp(&b.distance(reference))
            .then_with(|| lex_cmp(a, b))
    });
    goals
}

fn lex_cmp(a: &JointConfig, b: &JointConfig) -> std::cmp::Ordering {
    a.angles()
        .iter()
        .zip(b.angles().iter())
        .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Shortcut smoothing: repeatedly try to replace random sub-chains with a
/// straight segment. Length never increases and endpoints are preserved.
pub fn shortcut(
    world: &CollisionWorld,
    model: &KinematicModel,
    traj: &Trajectory,
    params: &PlannerParams,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    shortcut_waypoints(world, model, traj.waypoints.clone(), params, &mut rng)
}

fn shortcut_waypoints(
    world: &CollisionWorld,
    model: &KinematicModel,
    waypoints: Vec<JointConfig>,
    params: &PlannerParams,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let mut wps = waypoints;
    // Collapsing the whole path first makes straight corridors resolve to a
    // single segment regardless of the random pass outcomes.
    try_splice(world, model, &mut wps, 0, usize::MAX, params);
    for _ in 0..params.shortcut_passes {
        if wps.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..wps.len() - 2);
        let j = rng.gen_range(i + 2..wps.len());
        try_splice(world, model, &mut wps, i, j, params);
    }
    Trajectory::from_dedup(wps)
}

fn try_splice(
    world: &CollisionWorld,
    model: &KinematicModel,
    wps: &mut Vec<JointConfig>,
    i: usize,
    j: usize,
    params: &PlannerParams,
) {
    let j = j.min(wps.len() - 1);
    if wps.len() < 3 || j <= i + 1 {
        return;
    }
    if !world.segment_in_collision(model, &wps[i], &wps[j], params.collision_resolution) {
        wps.drain(i + 1..j);
    }
}
