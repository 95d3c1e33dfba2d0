//! Pick-place task harness: scenario sampling over hardness levels and
//! trolley depths, observation construction from synthetic bag clouds,
//! action decoding, a geometric grasp surrogate standing in for soft-body
//! physics, episode rollout with the six-trajectory pick-place macro, and a
//! staged lesson scheduler.

use crate::boosted::{
    boosted_plan, fresh_plan, query_eligibility, Direction, PlanResult, ProximityParams,
};
use crate::collision::{build_world, CollisionWorld, SceneConfig};
use crate::kinematics::{downward_orientation, wrap_angle, JointConfig, KinematicModel, Pose};
use crate::perception::{characteristic_points, synth_bag_cloud, CharacteristicPoints, SynthBagParams};
use crate::rrt::PlannerParams;
use crate::trajectory_db::{world_fingerprint, TrajectoryDb};
use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Where a bag is initialized inside the trolley. Walls 1 and 2 are the long
/// (y-side) walls, 3 and 4 the short (x-side) walls; a corner label names
/// both adjoining walls, e.g. 24 sits where walls 2 and 4 meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HardnessLevel {
    Floor,
    Wall(u8),
    Corner(u8, u8),
    Vertical,
}

impl HardnessLevel {
    pub fn code(&self) -> String {
        match self {
            HardnessLevel::Floor => "0".into(),
            HardnessLevel::Wall(w) => w.to_string(),
            HardnessLevel::Corner(a, b) => format!("{a}{b}"),
            HardnessLevel::Vertical => "v".into(),
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "0" => Some(HardnessLevel::Floor),
            "1" | "2" | "3" | "4" => Some(HardnessLevel::Wall(code.parse().ok()?)),
            "13" | "14" | "23" | "24" => {
                let b: Vec<u8> = code.bytes().map(|c| c - b'0').collect();
                Some(HardnessLevel::Corner(b[0], b[1]))
            }
            "v" => Some(HardnessLevel::Vertical),
            _ => None,
        }
    }

    /// Unlock order for the staged curriculum.
    pub fn curriculum_order() -> [HardnessLevel; 10] {
        [
            HardnessLevel::Floor,
            HardnessLevel::Wall(1),
            HardnessLevel::Wall(2),
            HardnessLevel::Wall(3),
            HardnessLevel::Wall(4),
            HardnessLevel::Corner(1, 3),
            HardnessLevel::Corner(1, 4),
            HardnessLevel::Corner(2, 3),
            HardnessLevel::Corner(2, 4),
            HardnessLevel::Vertical,
        ]
    }
}

/// How scenario floor heights are drawn.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum HeightMode {
    Fixed(f64),
    /// Uniform choice from a discrete set.
    Set(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
}

impl Default for HeightMode {
    fn default() -> Self {
        HeightMode::Set(vec![-0.63, -0.40, -0.20])
    }
}

/// Reward components and the per-iteration discount table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RewardConfig {
    pub achievable: f64,
    pub grasp: f64,
    pub pull: f64,
    pub discounts: Vec<f64>,
    pub max_attempts: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            achievable: 1.0,
            grasp: 2.0,
            pull: 5.0,
            discounts: vec![1.0, 0.55, 0.3, 0.15, 0.08, 0.04],
            max_attempts: 6,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.discounts.len() != self.max_attempts {
            return Err("discount table length must equal max attempts");
        }
        if !self.discounts.windows(2).all(|w| w[0] > w[1]) {
            return Err("discount table must be strictly decreasing");
        }
        if !self.discounts.iter().all(|d| *d > 0.0 && *d <= 1.0) {
            return Err("discounts must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Task-level knobs: bag geometry, grasp surrogate thresholds, macro
/// offsets, action bounds and the lesson scheduler.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TaskConfig {
    /// Bag footprint as it lies flat; a vertical bag stands on its long
    /// edge, trading the footprint width for the height.
    pub bag_footprint: [f64; 2],
    pub bag_thickness: f64,
    pub bag_sag: f64,
    pub cloud_noise_sigma: f64,
    /// Grasp surrogate: approach-axis cone half-angle (radians) and maximum
    /// contact distance to the bag top surface (meters). These thresholds
    /// are a documented geometric proxy, not measured physics.
    pub grasp_cone_angle: f64,
    pub grasp_contact_dist: f64,
    /// Vertical headroom added above the bag when building the action
    /// bounding box, so actions can express retreat poses well above it.
    pub approach_headroom: f64,
    /// Standoff above the grasp pose for the macro's approach leg.
    pub approach_offset: f64,
    /// How far below the transfer standoff the place pose sits.
    pub place_drop: f64,
    pub orientation_bounds: [f64; 3],
    pub reward: RewardConfig,
    pub lesson_window: usize,
    pub lesson_threshold: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            bag_footprint: [0.29, 0.18],
            bag_thickness: 0.06,
            bag_sag: 0.015,
            cloud_noise_sigma: 0.002,
            grasp_cone_angle: 30f64.to_radians(),
            grasp_contact_dist: 0.03,
            approach_headroom: 1.0,
            approach_offset: 0.10,
            place_drop: 0.06,
            orientation_bounds: [PI, 0.6, 0.6],
            reward: RewardConfig::default(),
            lesson_window: 20,
            lesson_threshold: 0.8,
        }
    }
}

/// One sampled episode setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub hardness: HardnessLevel,
    pub floor_z: f64,
    pub bag_xy: [f64; 2],
    pub bag_yaw: f64,
    pub vertical: bool,
    pub seed: u64,
}

impl Scenario {
    /// Footprint of the bag as it currently lies.
    pub fn footprint(&self, cfg: &TaskConfig) -> [f64; 2] {
        if self.vertical {
            [cfg.bag_footprint[0], cfg.bag_thickness]
        } else {
            cfg.bag_footprint
        }
    }

    pub fn bag_height(&self, cfg: &TaskConfig) -> f64 {
        if self.vertical {
            cfg.bag_footprint[1]
        } else {
            cfg.bag_thickness
        }
    }

    pub fn bag_top_z(&self, cfg: &TaskConfig) -> f64 {
        self.floor_z + self.bag_height(cfg)
    }

    /// Deterministic synthetic cloud of the bag's visible top surface.
    pub fn cloud(&self, cfg: &TaskConfig, shot: u64) -> crate::perception::PointCloud {
        let fp = self.footprint(cfg);
        let params = SynthBagParams {
            footprint: fp,
            thickness: self.bag_height(cfg),
            sag: if self.vertical { 0.0 } else { cfg.bag_sag },
            noise_sigma: cfg.cloud_noise_sigma,
            samples: [31, 21],
        };
        synth_bag_cloud(
            (self.bag_xy[0], self.bag_xy[1]),
            self.floor_z,
            self.bag_yaw,
            &params,
            self.seed ^ shot.wrapping_mul(0x9e3779b97f4a7c15),
        )
    }
}

/// Axis-aligned box, the action-normalization volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// Bag bounding box with the approach headroom above it.
pub fn bag_bounding_box(scenario: &Scenario, cfg: &TaskConfig) -> Aabb {
    let fp = scenario.footprint(cfg);
    let (s, c) = (scenario.bag_yaw.sin().abs(), scenario.bag_yaw.cos().abs());
    let hx = 0.5 * (fp[0] * c + fp[1] * s);
    let hy = 0.5 * (fp[0] * s + fp[1] * c);
    Aabb {
        min: Point3::new(scenario.bag_xy[0] - hx, scenario.bag_xy[1] - hy, scenario.floor_z),
        max: Point3::new(
            scenario.bag_xy[0] + hx,
            scenario.bag_xy[1] + hy,
            scenario.bag_top_z(cfg) + cfg.approach_headroom,
        ),
    }
}

/// Draw a scenario: hardness uniform over the lesson set, height per the
/// mode, bag pose uniform within the hardness region, fully inside the
/// trolley interior.
pub fn sample_scenario(
    lesson: &[HardnessLevel],
    heights: &HeightMode,
    scene: &SceneConfig,
    cfg: &TaskConfig,
    seed: u64,
) -> Scenario {
    assert!(!lesson.is_empty(), "lesson set must not be empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hardness = lesson[rng.gen_range(0..lesson.len())];
    let floor_z = match heights {
        HeightMode::Fixed(h) => *h,
        HeightMode::Set(hs) => hs[rng.gen_range(0..hs.len())],
        HeightMode::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
    };
    let vertical = hardness == HardnessLevel::Vertical;

    let fp = if vertical {
        [cfg.bag_footprint[0], cfg.bag_thickness]
    } else {
        cfg.bag_footprint
    };
    let [cx, cy] = scene.trolley_center_xy;
    let (half_x, half_y) = (0.5 * scene.trolley_inner[0], 0.5 * scene.trolley_inner[1]);
    let clear = 0.03;

    // Wall-adjacent bags lie parallel to their wall (plus jitter); free bags
    // take any yaw. Extents follow from the yaw, which keeps every sampled
    // bag strictly inside the walls.
    let wall_gap = |rng: &mut ChaCha8Rng| rng.gen_range(0.005..0.05);
    let (yaw, x, y) = match hardness {
        HardnessLevel::Floor | HardnessLevel::Vertical => {
            let yaw = rng.gen_range(-PI..PI);
            let (hx, hy) = rotated_half_extents(fp, yaw);
            let x = rng.gen_range(-(half_x - hx - clear)..=(half_x - hx - clear));
            let y = rng.gen_range(-(half_y - hy - clear)..=(half_y - hy - clear));
            (yaw, cx + x, cy + y)
        }
        HardnessLevel::Wall(w) => {
            let yaw = wall_parallel_yaw(w) + rng.gen_range(-0.15..0.15);
            let (hx, hy) = rotated_half_extents(fp, yaw);
            let gap = wall_gap(&mut rng);
            let (x, y) = match w {
                1 => (rng.gen_range(-(half_x - hx - clear)..=(half_x - hx - clear)), half_y - hy - gap),
                2 => (rng.gen_range(-(half_x - hx - clear)..=(half_x - hx - clear)), -(half_y - hy - gap)),
                3 => (half_x - hx - gap, rng.gen_range(-(half_y - hy - clear)..=(half_y - hy - clear))),
                _ => (-(half_x - hx - gap), rng.gen_range(-(half_y - hy - clear)..=(half_y - hy - clear))),
            };
            (yaw, cx + x, cy + y)
        }
        HardnessLevel::Corner(a, b) => {
            let yaw = wall_parallel_yaw(a) + rng.gen_range(-0.15..0.15);
            let (hx, hy) = rotated_half_extents(fp, yaw);
            let (gx, gy) = (wall_gap(&mut rng), wall_gap(&mut rng));
            let y = match a {
                1 => half_y - hy - gy,
                _ => -(half_y - hy - gy),
            };
            let x = match b {
                3 => half_x - hx - gx,
                _ => -(half_x - hx - gx),
            };
            (yaw, cx + x, cy + y)
        }
    };

    Scenario { hardness, floor_z, bag_xy: [x, y], bag_yaw: wrap_angle(yaw), vertical, seed }
}

fn rotated_half_extents(fp: [f64; 2], yaw: f64) -> (f64, f64) {
    let (s, c) = (yaw.sin().abs(), yaw.cos().abs());
    (0.5 * (fp[0] * c + fp[1] * s), 0.5 * (fp[0] * s + fp[1] * c))
}

/// Yaw laying the bag's long axis parallel to the named wall.
fn wall_parallel_yaw(wall: u8) -> f64 {
    match wall {
        1 | 2 => 0.0,      // long walls run along x
        _ => PI / 2.0,     // short walls run along y
    }
}

/// Policy input: 15 feature values, the hardness class and the vertical
/// flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: [f64; 15],
    pub hardness: HardnessLevel,
    pub vertical: bool,
}

/// Feature points in the base frame plus the scenario labels.
pub fn build_observation(scenario: &Scenario, points: &CharacteristicPoints) -> Observation {
    Observation {
        features: points.flat(),
        hardness: scenario.hardness,
        vertical: scenario.vertical,
    }
}

/// Six continuous action values: position normalized to the bag bounding
/// box, orientation offsets from straight-down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionCommand {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

/// Decoded gripper pose plus whether any component needed clamping.
pub fn decode_action(action: &ActionCommand, bbox: &Aabb, cfg: &TaskConfig) -> (Pose, bool) {
    let mut clamped = false;
    let mut pos = [0.0; 3];
    for (i, p) in pos.iter_mut().enumerate() {
        let v = action.position[i];
        let c = v.clamp(0.0, 1.0);
        clamped |= c != v;
        *p = bbox.min[i] + c * bbox.extent()[i];
    }
    let mut ori = [0.0; 3];
    for (i, o) in ori.iter_mut().enumerate() {
        let bound = cfg.orientation_bounds[i];
        let v = action.orientation[i];
        let c = v.clamp(-bound, bound);
        clamped |= c != v;
        *o = c;
    }
    let pose = Pose::new(
        Point3::new(pos[0], pos[1], pos[2]),
        downward_orientation(ori[0], ori[1], ori[2]),
    );
    (pose, clamped)
}

/// Everything an episode needs besides the scenario itself. The database is
/// consulted only when its fingerprint matches the world built for the
/// scenario's floor height; otherwise every leg plans fresh.
pub struct TaskContext<'a> {
    pub scene: SceneConfig,
    pub model: &'a KinematicModel,
    pub db: Option<&'a TrajectoryDb>,
    pub home: JointConfig,
    pub planner: PlannerParams,
    pub prox: ProximityParams,
    pub cfg: TaskConfig,
}

impl<'a> TaskContext<'a> {
    pub fn scene_for(&self, scenario: &Scenario) -> SceneConfig {
        SceneConfig { trolley_floor_z: scenario.floor_z, ..self.scene.clone() }
    }

    /// Database to use against `world`, dropped on fingerprint mismatch.
    fn usable_db(&self, scene: &SceneConfig) -> Option<&'a TrajectoryDb> {
        let db = self.db?;
        (db.fingerprint == world_fingerprint(self.model, scene)).then_some(db)
    }
}

#[derive(Debug, Clone)]
pub struct AttemptRecord {
    pub action: ActionCommand,
    pub target: Pose,
    pub clamped: bool,
    pub achievable: bool,
    pub grasped: bool,
    pub pulled: bool,
    pub reward: f64,
    pub plans: Vec<PlanResult>,
}

/// Component-sum reward scaled by the iteration discount.
pub fn reward(record: &AttemptRecord, iteration: usize, cfg: &RewardConfig) -> f64 {
    let base = cfg.achievable * record.achievable as u8 as f64
        + cfg.grasp * record.grasped as u8 as f64
        + cfg.pull * record.pulled as u8 as f64;
    base * cfg.discounts[iteration]
}

/// One grasp attempt from home: plan to the target, apply the geometric
/// grasp surrogate, and on a grasp plan the retreat back to home.
pub fn attempt_grasp(
    world: &CollisionWorld,
    model: &KinematicModel,
    db: Option<&TrajectoryDb>,
    scenario: &Scenario,
    target: &Pose,
    ctx: &TaskContext<'_>,
    leg_seed: u64,
) -> AttemptRecord {
    let mut record = AttemptRecord {
        action: ActionCommand { position: [0.0; 3], orientation: [0.0; 3] },
        target: *target,
        clamped: false,
        achievable: false,
        grasped: false,
        pulled: false,
        reward: 0.0,
        plans: Vec::new(),
    };

    let approach = plan_leg(world, model, db, &ctx.home, target, ctx, leg_seed);
    let reach_config = approach.trajectory.as_ref().map(|t| *t.last());
    record.achievable = reach_config.is_some();
    record.plans.push(approach);
    let Some(reach_config) = reach_config else {
        return record;
    };

    record.grasped = grasp_surrogate_holds(scenario, target, &ctx.cfg);
    if !record.grasped {
        return record;
    }

    let retreat_target = model.fk_unchecked(&ctx.home);
    let retreat = plan_leg(world, model, db, &reach_config, &retreat_target, ctx, leg_seed ^ 1);
    record.pulled = retreat.trajectory.is_some();
    record.plans.push(retreat);
    record
}

/// The geometric stand-in for grasp physics: the approach axis must point
/// down within the cone angle and the contact point must lie within the
/// contact distance of the bag's top surface patch.
pub fn grasp_surrogate_holds(scenario: &Scenario, target: &Pose, cfg: &TaskConfig) -> bool {
    let approach = target.orientation() * Vector3::z_axis().into_inner();
    // Straight-down approach means the tool z axis points at -z.
    let cone_ok = (-approach).z >= cfg.grasp_cone_angle.cos();

    let fp = scenario.footprint(cfg);
    let top = scenario.bag_top_z(cfg);
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -scenario.bag_yaw);
    let local = rot
        * Vector3::new(
            target.position.x - scenario.bag_xy[0],
            target.position.y - scenario.bag_xy[1],
            0.0,
        );
    let du = (local.x.abs() - 0.5 * fp[0]).max(0.0);
    let dv = (local.y.abs() - 0.5 * fp[1]).max(0.0);
    let dz = target.position.z - top;
    let contact = (du * du + dv * dv + dz * dz).sqrt();
    cone_ok && contact <= cfg.grasp_contact_dist
}

fn plan_leg(
    world: &CollisionWorld,
    model: &KinematicModel,
    db: Option<&TrajectoryDb>,
    current: &JointConfig,
    target: &Pose,
    ctx: &TaskContext<'_>,
    seed: u64,
) -> PlanResult {
    let planner = ctx.planner.with_seed(seed);
    match db {
        Some(db) => boosted_plan(db, world, model, current, target, &planner, &ctx.prox),
        None => fresh_plan(world, model, current, target, &planner),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalReason {
    Success,
    AttemptsExhausted,
}

#[derive(Debug)]
pub struct EpisodeOutcome {
    pub attempts: Vec<AttemptRecord>,
    pub terminal: TerminalReason,
    pub total_reward: f64,
    /// Full pick-place macro run on success.
    pub macro_result: Option<MacroResult>,
}

/// Policies map observations (plus the action-normalization context) to
/// action commands.
pub trait Policy {
    fn act(&mut self, obs: &Observation, ctx: &ActionContext) -> ActionCommand;
}

/// Context a scripted policy may use to normalize its intent into the
/// action encoding.
#[derive(Debug, Clone, Copy)]
pub struct ActionContext {
    pub bounding_box: Aabb,
}

/// Targets the center keypoint straight-down at the bag surface.
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn act(&mut self, obs: &Observation, ctx: &ActionContext) -> ActionCommand {
        let a4 = Point3::new(obs.features[12], obs.features[13], obs.features[14]);
        let e = ctx.bounding_box.extent();
        let norm = |v: f64, lo: f64, len: f64| if len > 0.0 { (v - lo) / len } else { 0.5 };
        ActionCommand {
            position: [
                norm(a4.x, ctx.bounding_box.min.x, e.x).clamp(0.0, 1.0),
                norm(a4.y, ctx.bounding_box.min.y, e.y).clamp(0.0, 1.0),
                norm(a4.z, ctx.bounding_box.min.z, e.z).clamp(0.0, 1.0),
            ],
            orientation: [0.0; 3],
        }
    }
}

/// Always aims at the top of the action box, high above the bag.
pub struct HoverPolicy;

impl Policy for HoverPolicy {
    fn act(&mut self, _obs: &Observation, _ctx: &ActionContext) -> ActionCommand {
        ActionCommand { position: [0.5, 0.5, 1.0], orientation: [0.0; 3] }
    }
}

/// Uniform random actions, deterministic by seed.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation, _ctx: &ActionContext) -> ActionCommand {
        let mut position = [0.0; 3];
        for p in &mut position {
            *p = self.rng.gen_range(0.0..=1.0);
        }
        let mut orientation = [0.0; 3];
        for (o, b) in orientation.iter_mut().zip([PI, 0.6, 0.6]) {
            *o = self.rng.gen_range(-b..=b);
        }
        ActionCommand { position, orientation }
    }
}

/// Roll one episode: observe, act, attempt, reward, until a pull succeeds
/// or attempts run out. A success finishes with the six-trajectory macro.
pub fn run_episode(
    policy: &mut dyn Policy,
    scenario: &Scenario,
    ctx: &TaskContext<'_>,
) -> EpisodeOutcome {
    let scene = ctx.scene_for(scenario);
    let world = build_world(&scene, ctx.model).expect("scenario scene must be valid");
    let db = ctx.usable_db(&scene);
    let bbox = bag_bounding_box(scenario, &ctx.cfg);
    let action_ctx = ActionContext { bounding_box: bbox };

    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut total_reward = 0.0;
    let mut success_pose = None;

    for iteration in 0..ctx.cfg.reward.max_attempts {
        let cloud = scenario.cloud(&ctx.cfg, iteration as u64);
        let points = characteristic_points(&cloud).expect("synthetic cloud non-empty");
        let obs = build_observation(scenario, &points);
        let action = policy.act(&obs, &action_ctx);
        let (target, clamped) = decode_action(&action, &bbox, &ctx.cfg);

        let leg_seed = scenario.seed ^ ((iteration as u64 + 1) << 32);
        let mut record = attempt_grasp(&world, ctx.model, db, scenario, &target, ctx, leg_seed);
        record.action = action;
        record.clamped = clamped;
        record.reward = reward(&record, iteration, &ctx.cfg.reward);
        total_reward += record.reward;
        let pulled = record.pulled;
        if pulled {
            success_pose = Some(target);
        }
        attempts.push(record);
        if pulled {
            break;
        }
    }

    let terminal = if success_pose.is_some() {
        TerminalReason::Success
    } else {
        TerminalReason::AttemptsExhausted
    };
    let macro_result = success_pose.map(|grasp| {
        execute_macro(
            &world,
            ctx.model,
            db,
            &grasp,
            &default_place_pose(ctx, scenario.seed),
            ctx,
            PlanMode::PerContext,
            scenario.seed,
        )
    });

    EpisodeOutcome { attempts, terminal, total_reward, macro_result }
}

/// Place standoff for a scenario: one of the table-area cells when the
/// database defines them, else a fixed spot above the table. Cells without a
/// stored entry (for instance too close to the base column for a
/// straight-down wrist) are skipped; placements only go where the database
/// can serve them.
pub fn default_place_pose(ctx: &TaskContext<'_>, seed: u64) -> Pose {
    if let Some(db) = ctx.db {
        if let Some((area_idx, area)) =
            db.areas.iter().enumerate().find(|(_, a)| a.name == "table")
        {
            let n = area.cell_count();
            let rotation = (seed % area.rotations.len() as u64) as u32;
            for probe in 0..n {
                let idx = (seed + probe) % n;
                let dims = area.dims;
                let cell = crate::trajectory_db::CellIndex {
                    ix: (idx % dims[0] as u64) as u32,
                    iy: ((idx / dims[0] as u64) % dims[1] as u64) as u32,
                    iz: 0,
                };
                let key = crate::trajectory_db::EntryKey {
                    area: area_idx as u32,
                    cell,
                    rotation,
                };
                if db.entries.contains_key(&key) {
                    return area.cell_pose(&cell, rotation);
                }
            }
        }
    }
    Pose::new(
        Point3::new(ctx.scene.table_center_xy[0], ctx.scene.table_center_xy[1], 0.2),
        downward_orientation(0.0, 0.0, 0.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// Boosted when the context database is usable, fresh otherwise.
    PerContext,
    /// Fresh planning on every leg, for the paired baseline.
    FreshOnly,
}

#[derive(Debug)]
pub struct LegResult {
    pub name: &'static str,
    /// Which guard admitted the query to the database, if any.
    pub eligible: Option<Direction>,
    pub result: PlanResult,
}

/// Outcome of the six-trajectory pick-place macro.
#[derive(Debug)]
pub struct MacroResult {
    pub legs: Vec<LegResult>,
    pub completed: bool,
}

impl MacroResult {
    pub fn total_time(&self) -> std::time::Duration {
        self.legs.iter().map(|l| l.result.total_time).sum()
    }

    pub fn db_served(&self) -> usize {
        self.legs.iter().filter(|l| l.result.served_from_db()).count()
    }

    pub fn db_eligible(&self) -> usize {
        self.legs.iter().filter(|l| l.eligible.is_some()).count()
    }
}

/// The six trajectories of one pick-place operation: approach into the
/// trolley above the bag, descend to the grasp, retreat to home, transfer
/// to the standoff above the table, lower to the place pose, return home.
#[allow(clippy::too_many_arguments)]
pub fn execute_macro(
    world: &CollisionWorld,
    model: &KinematicModel,
    db: Option<&TrajectoryDb>,
    grasp: &Pose,
    place_standoff: &Pose,
    ctx: &TaskContext<'_>,
    mode: PlanMode,
    seed: u64,
) -> MacroResult {
    let home_pose = model.fk_unchecked(&ctx.home);
    let lift = |p: &Pose, dz: f64| {
        Pose::new(
            Point3::new(p.position.x, p.position.y, p.position.z + dz),
            p.orientation(),
        )
    };
    let targets: [(&'static str, Pose); 6] = [
        ("approach-into-trolley", lift(grasp, ctx.cfg.approach_offset)),
        ("pre-grasp", *grasp),
        ("retreat-above-trolley", home_pose),
        ("transfer-above-table", *place_standoff),
        ("place", lift(place_standoff, -ctx.cfg.place_drop)),
        ("return-home", home_pose),
    ];

    let mut current = ctx.home;
    let mut legs = Vec::with_capacity(6);
    let mut completed = true;
    for (i, (name, target)) in targets.iter().enumerate() {
        let planner = ctx.planner.with_seed(seed ^ ((i as u64 + 1) * 0x9e37));
        let (eligible, result) = match (mode, db) {
            (PlanMode::PerContext, Some(db)) => (
                query_eligibility(db, model, &current, target, &ctx.prox),
                boosted_plan(db, world, model, &current, target, &planner, &ctx.prox),
            ),
            _ => (None, fresh_plan(world, model, &current, target, &planner)),
        };
        match &result.trajectory {
            Some(t) => current = *t.last(),
            None => completed = false,
        }
        legs.push(LegResult { name, eligible, result });
        if !completed {
            break;
        }
    }
    MacroResult { legs, completed }
}

/// Staged curriculum: unlock the next hardness class whenever the rolling
/// success rate over the window reaches the threshold; the window resets at
/// each unlock.
pub fn lesson_scheduler(history: &[bool], cfg: &TaskConfig) -> Vec<HardnessLevel> {
    let order = HardnessLevel::curriculum_order();
    let window = cfg.lesson_window.max(1);
    let mut unlocked = 1usize;
    let mut recent: std::collections::VecDeque<bool> = std::collections::VecDeque::new();
    for &success in history {
        recent.push_back(success);
        if recent.len() > window {
            recent.pop_front();
        }
        if recent.len() == window && unlocked < order.len() {
            let rate = recent.iter().filter(|s| **s).count() as f64 / window as f64;
            if rate >= cfg.lesson_threshold {
                unlocked += 1;
                recent.clear();
            }
        }
    }
    order[..unlocked].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_table_values() {
        let cfg = RewardConfig::default();
        cfg.validate().unwrap();
        let full = AttemptRecord {
            action: ActionCommand { position: [0.0; 3], orientation: [0.0; 3] },
            target: Pose::identity(),
            clamped: false,
            achievable: true,
            grasped: true,
            pulled: true,
            reward: 0.0,
            plans: Vec::new(),
        };
        for (i, d) in cfg.discounts.iter().enumerate() {
            assert!((reward(&full, i, &cfg) - 8.0 * d).abs() < 1e-12);
        }
        let achievable_only = AttemptRecord { grasped: false, pulled: false, ..full.clone() };
        assert!((reward(&achievable_only, 2, &cfg) - 0.3).abs() < 1e-12);
        let nothing = AttemptRecord { achievable: false, grasped: false, pulled: false, ..full };
        assert_eq!(reward(&nothing, 4, &cfg), 0.0);
    }

    #[test]
    fn reward_monotone_in_iteration() {
        let cfg = RewardConfig::default();
        let rec = AttemptRecord {
            action: ActionCommand { position: [0.0; 3], orientation: [0.0; 3] },
            target: Pose::identity(),
            clamped: false,
            achievable: true,
            grasped: true,
            pulled: false,
            reward: 0.0,
            plans: Vec::new(),
        };
        let mut prev = f64::INFINITY;
        for i in 0..cfg.max_attempts {
            let r = reward(&rec, i, &cfg);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn decode_action_corners_and_clamping() {
        let scenario = Scenario {
            hardness: HardnessLevel::Floor,
            floor_z: -0.63,
            bag_xy: [0.6, 0.0],
            bag_yaw: 0.0,
            vertical: false,
            seed: 0,
        };
        let cfg = TaskConfig::default();
        let bbox = bag_bounding_box(&scenario, &cfg);
        let center = ActionCommand { position: [0.5, 0.5, 0.5], orientation: [0.0; 3] };
        let (pose, clamped) = decode_action(&center, &bbox, &cfg);
        assert!(!clamped);
        assert!((pose.position.x - 0.6).abs() < 1e-12);
        assert!((pose.position.y - 0.0).abs() < 1e-12);
        let down = downward_orientation(0.0, 0.0, 0.0);
        assert!(crate::kinematics::quat_angle(&pose.orientation(), &down) < 1e-12);

        let min_corner = ActionCommand { position: [0.0, 0.0, 0.0], orientation: [0.0; 3] };
        let (pose, _) = decode_action(&min_corner, &bbox, &cfg);
        assert_eq!(pose.position, bbox.min);

        let wild = ActionCommand { position: [-1.0, 2.0, 0.5], orientation: [0.0, 9.0, 0.0] };
        let (pose, clamped) = decode_action(&wild, &bbox, &cfg);
        assert!(clamped);
        assert!((pose.position.x - bbox.min.x).abs() < 1e-12);
        assert!((pose.position.y - bbox.max.y).abs() < 1e-12);
    }

    #[test]
    fn decode_action_matches_scalar_formula() {
        let scenario = Scenario {
            hardness: HardnessLevel::Floor,
            floor_z: -0.4,
            bag_xy: [0.55, -0.1],
            bag_yaw: 0.7,
            vertical: false,
            seed: 0,
        };
        let cfg = TaskConfig::default();
        let bbox = bag_bounding_box(&scenario, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = ActionCommand {
                position: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                orientation: [0.0; 3],
            };
            let (pose, clamped) = decode_action(&a, &bbox, &cfg);
            assert!(!clamped);
            for i in 0..3 {
                let want = bbox.min[i] + a.position[i] * (bbox.max[i] - bbox.min[i]);
                assert_eq!(pose.position[i], want);
            }
        }
    }

    #[test]
    fn grasp_surrogate_contact_and_cone() {
        let scenario = Scenario {
            hardness: HardnessLevel::Floor,
            floor_z: -0.63,
            bag_xy: [0.6, 0.0],
            bag_yaw: 0.0,
            vertical: false,
            seed: 0,
        };
        let cfg = TaskConfig::default();
        let top = scenario.bag_top_z(&cfg);
        let at_surface = Pose::new(Point3::new(0.6, 0.0, top), downward_orientation(0.3, 0.0, 0.0));
        assert!(grasp_surrogate_holds(&scenario, &at_surface, &cfg));

        let above = Pose::new(Point3::new(0.6, 0.0, top + 0.2), downward_orientation(0.0, 0.0, 0.0));
        assert!(!grasp_surrogate_holds(&scenario, &above, &cfg));

        let tilted = Pose::new(Point3::new(0.6, 0.0, top), downward_orientation(0.0, 0.8, 0.0));
        assert!(!grasp_surrogate_holds(&scenario, &tilted, &cfg));
    }

    #[test]
    fn scheduler_stages() {
        let cfg = TaskConfig { lesson_window: 4, lesson_threshold: 0.75, ..TaskConfig::default() };
        assert_eq!(lesson_scheduler(&[], &cfg), vec![HardnessLevel::Floor]);

        let wins = vec![true; 4];
        let lesson = lesson_scheduler(&wins, &cfg);
        assert_eq!(lesson.len(), 2, "one new class after a perfect window");

        let losses = vec![false; 12];
        assert_eq!(lesson_scheduler(&losses, &cfg).len(), 1);

        let grind = vec![true; 100];
        let lesson = lesson_scheduler(&grind, &cfg);
        assert_eq!(lesson.len(), 10usize.min(1 + 100 / 4));
    }

    #[test]
    fn scenario_sampling_deterministic_and_in_bounds() {
        let scene = SceneConfig::default();
        let cfg = TaskConfig::default();
        let lesson = HardnessLevel::curriculum_order();
        for seed in 0..200 {
            let a = sample_scenario(&lesson, &HeightMode::default(), &scene, &cfg, seed);
            let b = sample_scenario(&lesson, &HeightMode::default(), &scene, &cfg, seed);
            assert_eq!(a, b);
            let fp = a.footprint(&cfg);
            let (hx, hy) = rotated_half_extents(fp, a.bag_yaw);
            let dx = (a.bag_xy[0] - scene.trolley_center_xy[0]).abs();
            let dy = (a.bag_xy[1] - scene.trolley_center_xy[1]).abs();
            assert!(dx + hx <= 0.5 * scene.trolley_inner[0] + 1e-9, "bag outside: {a:?}");
            assert!(dy + hy <= 0.5 * scene.trolley_inner[1] + 1e-9, "bag outside: {a:?}");
            assert!([-0.63, -0.40, -0.20].contains(&a.floor_z));
        }
    }

    #[test]
    fn hardness_codes_round_trip() {
        for h in HardnessLevel::curriculum_order() {
            assert_eq!(HardnessLevel::from_code(&h.code()), Some(h));
        }
        assert_eq!(HardnessLevel::from_code("99"), None);
    }
}
