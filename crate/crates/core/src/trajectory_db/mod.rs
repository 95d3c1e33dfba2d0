//! Offline generation, persistence and lookup of supporting trajectories.
//!
//! The workspace is discretized into areas of interest (a grid of cells times
//! a set of end-effector rotations). For every reachable (cell, rotation) the
//! database stores a forward trajectory (home to cell pose) and a separately
//! planned backward trajectory (cell pose to home). Generation is parallel
//! over entries with per-entry seeds, so output is identical for any worker
//! count; lookups match a brute-force linear scan exactly.

mod format;

pub use format::{load, save, DbError, FORMAT_VERSION};

use crate::collision::{CollisionWorld, SceneConfig};
use crate::kinematics::{
    downward_orientation, inverse_kinematics, quat_angle, JointConfig, KinematicModel, Pose,
};
use crate::rrt::{plan_to_config, plan_to_pose, pose_goal_set, PlannerParams, Trajectory};
use nalgebra::{Point3, UnitQuaternion};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AreaError {
    #[error("area {0}: {1}")]
    Invalid(String, &'static str),
    #[error("area {0} exceeds scene bounds")]
    OutOfBounds(String),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("home configuration in collision")]
    HomeInCollision,
    #[error(transparent)]
    Area(#[from] AreaError),
}

/// Grid index of one cell inside an area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

/// Database key: area index, cell, rotation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryKey {
    pub area: u32,
    pub cell: CellIndex,
    pub rotation: u32,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}-{}-{}/{}",
            self.area, self.cell.ix, self.cell.iy, self.cell.iz, self.rotation
        )
    }
}

/// A discretized workspace region: grid origin pose (minimum corner, grid
/// axes), cell counts, cell size and the rotation set planned per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaOfInterest {
    pub name: String,
    pub origin: Pose,
    pub dims: [u32; 3],
    pub cell_size: f64,
    pub rotations: Vec<UnitQuaternion<f64>>,
}

impl AreaOfInterest {
    pub fn validate(&self) -> Result<(), AreaError> {
        if self.dims.iter().any(|d| *d == 0) {
            return Err(AreaError::Invalid(self.name.clone(), "zero grid dimension"));
        }
        if !(self.cell_size > 0.0) {
            return Err(AreaError::Invalid(self.name.clone(), "cell size must be positive"));
        }
        if self.rotations.is_empty() {
            return Err(AreaError::Invalid(self.name.clone(), "empty rotation set"));
        }
        for r in &self.rotations {
            if (r.norm() - 1.0).abs() > 1e-9 {
                return Err(AreaError::Invalid(self.name.clone(), "non-unit rotation"));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> u64 {
        self.dims.iter().map(|d| *d as u64).product()
    }

    fn local(&self, p: &Point3<f64>) -> Point3<f64> {
        self.origin.to_isometry().inverse_transform_point(p)
    }

    /// Half-open containment test over the grid volume.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let l = self.local(p);
        (0..3).all(|k| l[k] >= 0.0 && l[k] < self.dims[k] as f64 * self.cell_size)
    }

    /// Cell holding `p`; boundary points resolve to the nearest cell center,
    /// ties to the smaller index.
    pub fn cell_containing(&self, p: &Point3<f64>) -> Option<CellIndex> {
        if !self.contains(p) {
            return None;
        }
        let l = self.local(p);
        let axis = |v: f64, n: u32| -> u32 {
            let i0 = (v / self.cell_size - 0.5).floor();
            let c0 = i0.clamp(0.0, (n - 1) as f64) as u32;
            let c1 = (i0 + 1.0).clamp(0.0, (n - 1) as f64) as u32;
            let center = |i: u32| (i as f64 + 0.5) * self.cell_size;
            if (v - center(c0)).abs() <= (v - center(c1)).abs() {
                c0
            } else {
                c1
            }
        };
        Some(CellIndex {
            ix: axis(l[0], self.dims[0]),
            iy: axis(l[1], self.dims[1]),
            iz: axis(l[2], self.dims[2]),
        })
    }

    pub fn cell_center(&self, c: &CellIndex) -> Point3<f64> {
        let l = Point3::new(
            (c.ix as f64 + 0.5) * self.cell_size,
            (c.iy as f64 + 0.5) * self.cell_size,
            (c.iz as f64 + 0.5) * self.cell_size,
        );
        self.origin.to_isometry().transform_point(&l)
    }

    /// Target pose for one (cell, rotation) pair.
    pub fn cell_pose(&self, c: &CellIndex, rotation: u32) -> Pose {
        Pose::new(
            self.cell_center(c),
            self.origin.orientation() * self.rotations[rotation as usize],
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nx).flat_map(move |ix| {
            (0..ny).flat_map(move |iy| (0..nz).map(move |iz| CellIndex { ix, iy, iz }))
        })
    }
}

/// Eight yaws spread over the full circle at each of the given downward
/// pitch tilts.
pub fn rotation_set(yaw_count: u32, pitch_angles: &[f64]) -> Vec<UnitQuaternion<f64>> {
    let mut out = Vec::with_capacity(yaw_count as usize * pitch_angles.len());
    for pitch in pitch_angles {
        for k in 0..yaw_count {
            let yaw = k as f64 * 2.0 * PI / yaw_count as f64;
            out.push(downward_orientation(yaw, *pitch, 0.0));
        }
    }
    out
}

/// The two stock areas: the trolley interior (960 cells of 55 mm with 24
/// rotations) and the transfer region above the table (16 cells of 188 mm
/// with 8 rotations).
pub fn default_areas(scene: &SceneConfig) -> Result<Vec<AreaOfInterest>, AreaError> {
    let trolley = trolley_area(scene, [8, 12, 10], 0.055, rotation_set(8, &[0.0, 15f64.to_radians(), 30f64.to_radians()]))?;
    let table = table_area(scene, [4, 4, 1], 0.188, rotation_set(8, &[0.0]))?;
    Ok(vec![trolley, table])
}

/// Grid centered in the trolley interior, resting just above the floor.
pub fn trolley_area(
    scene: &SceneConfig,
    dims: [u32; 3],
    cell_size: f64,
    rotations: Vec<UnitQuaternion<f64>>,
) -> Result<AreaOfInterest, AreaError> {
    let extent = [
        dims[0] as f64 * cell_size,
        dims[1] as f64 * cell_size,
        dims[2] as f64 * cell_size,
    ];
    let area = AreaOfInterest {
        name: "trolley".to_owned(),
        origin: Pose::new(
            Point3::new(
                scene.trolley_center_xy[0] - 0.5 * extent[0],
                scene.trolley_center_xy[1] - 0.5 * extent[1],
                scene.trolley_floor_z + 0.01,
            ),
            UnitQuaternion::identity(),
        ),
        dims,
        cell_size,
        rotations,
    };
    area.validate()?;
    let fits = extent[0] <= scene.trolley_inner[0]
        && extent[1] <= scene.trolley_inner[1]
        && scene.trolley_floor_z + 0.01 + extent[2] <= scene.trolley_rim_z() + 1e-9;
    if !fits {
        return Err(AreaError::OutOfBounds(area.name));
    }
    Ok(area)
}

/// Single-layer grid hovering above the table for the transfer move.
pub fn table_area(
    scene: &SceneConfig,
    dims: [u32; 3],
    cell_size: f64,
    rotations: Vec<UnitQuaternion<f64>>,
) -> Result<AreaOfInterest, AreaError> {
    let extent = [
        dims[0] as f64 * cell_size,
        dims[1] as f64 * cell_size,
        dims[2] as f64 * cell_size,
    ];
    let area = AreaOfInterest {
        name: "table".to_owned(),
        origin: Pose::new(
            Point3::new(
                scene.table_center_xy[0] - 0.5 * extent[0],
                scene.table_center_xy[1] - 0.5 * extent[1],
                scene.table_top_z + 0.12,
            ),
            UnitQuaternion::identity(),
        ),
        dims,
        cell_size,
        rotations,
    };
    area.validate()?;
    if extent[0] > scene.table_dims[0] || extent[1] > scene.table_dims[1] {
        return Err(AreaError::OutOfBounds(area.name));
    }
    Ok(area)
}

/// Why a (cell, rotation) pair has no stored trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissReason {
    /// The pose has no inverse-kinematics solution at all.
    NoIkSolution,
    /// Solutions exist but every one collides.
    AllSolutionsCollide,
    ForwardPlanFailed,
    BackwardPlanFailed,
}

impl MissReason {
    pub fn code(&self) -> &'static str {
        match self {
            MissReason::NoIkSolution => "unreachable-no-ik",
            MissReason::AllSolutionsCollide => "unreachable-collision",
            MissReason::ForwardPlanFailed => "plan-failed-forward",
            MissReason::BackwardPlanFailed => "plan-failed-backward",
        }
    }
}

/// Stored trajectories for one (cell, rotation) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    /// Home to cell pose.
    pub forward: Trajectory,
    /// Cell pose back to home, planned separately.
    pub backward: Trajectory,
    /// Cached flange pose at the forward trajectory end.
    pub end_pose: Pose,
}

/// One generated or skipped entry in the progress log; wall times live here
/// and in the CSV log, never in the database file, which must be bit
/// identical across runs and worker counts.
#[derive(Debug, Clone)]
pub struct GenerationRecord {
    pub key: EntryKey,
    pub status: Result<(), MissReason>,
    pub forward_time_s: f64,
    pub backward_time_s: f64,
    pub forward_waypoints: usize,
    pub backward_waypoints: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GenerationReport {
    pub records: Vec<GenerationRecord>,
    pub wall_time_s: f64,
}

impl GenerationReport {
    pub fn present(&self) -> usize {
        self.records.iter().filter(|r| r.status.is_ok()).count()
    }

    pub fn completeness(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        self.present() as f64 / self.records.len() as f64
    }

    /// CSV progress log: one line per entry.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "area,ix,iy,iz,rotation,status,forward_time_s,backward_time_s,forward_waypoints,backward_waypoints"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{:.6},{:.6},{},{}",
                r.key.area,
                r.key.cell.ix,
                r.key.cell.iy,
                r.key.cell.iz,
                r.key.rotation,
                r.status.map_or_else(|m| m.code(), |_| "present"),
                r.forward_time_s,
                r.backward_time_s,
                r.forward_waypoints,
                r.backward_waypoints,
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut by_reason: BTreeMap<&'static str, usize> = BTreeMap::new();
        for r in &self.records {
            if let Err(m) = r.status {
                *by_reason.entry(m.code()).or_default() += 1;
            }
        }
        let mut s = format!(
            "{}/{} entries present ({:.1}%)",
            self.present(),
            self.records.len(),
            100.0 * self.completeness()
        );
        for (code, n) in by_reason {
            s.push_str(&format!(", {code}: {n}"));
        }
        s
    }
}

/// The persistent supporting-trajectory database.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDb {
    pub fingerprint: [u8; 32],
    pub home: JointConfig,
    pub areas: Vec<AreaOfInterest>,
    pub entries: BTreeMap<EntryKey, DbEntry>,
    pub missing: BTreeMap<EntryKey, MissReason>,
    /// Planner parameters used during generation.
    pub gen_params: PlannerParams,
    pub db_seed: u64,
}

impl TrajectoryDb {
    pub fn area_containing(&self, p: &Point3<f64>) -> Option<usize> {
        self.areas.iter().position(|a| a.contains(p))
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

/// Canonical digest of the kinematic model and scene a database was built
/// against; load refuses mismatched worlds unless overridden.
pub fn world_fingerprint(model: &KinematicModel, scene: &SceneConfig) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    let mut f = |v: f64| h.update(v.to_bits().to_le_bytes());
    for j in &model.joints {
        f(j.a);
        f(j.d);
        f(j.alpha);
        f(j.limit_lo);
        f(j.limit_hi);
    }
    for r in &model.link_radii {
        f(*r);
    }
    for v in [
        scene.trolley_center_xy[0],
        scene.trolley_center_xy[1],
        scene.trolley_inner[0],
        scene.trolley_inner[1],
        scene.trolley_inner[2],
        scene.wall_thickness,
        scene.trolley_floor_z,
        scene.table_center_xy[0],
        scene.table_center_xy[1],
        scene.table_dims[0],
        scene.table_dims[1],
        scene.table_dims[2],
        scene.table_top_z,
        scene.ground_z,
        scene.margin,
        scene.robot_base_xyz[0],
        scene.robot_base_xyz[1],
        scene.robot_base_xyz[2],
        scene.robot_base_yaw,
    ] {
        f(v);
    }
    h.finalize().into()
}

/// Deterministic per-entry seed: a splitmix64 chain over the key fields.
fn entry_seed(db_seed: u64, key: &EntryKey) -> u64 {
    let mut state = db_seed;
    for v in [
        key.area as u64,
        key.cell.ix as u64,
        key.cell.iy as u64,
        key.cell.iz as u64,
        key.rotation as u64,
    ] {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub planner: PlannerParams,
    pub workers: usize,
    pub db_seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { planner: PlannerParams::default(), workers: 1, db_seed: 0 }
    }
}

/// Plan forward and backward supporting trajectories for every (cell,
/// rotation) pair across the areas. Parallel over entries; per-entry seeds
/// make the result independent of the worker count.
pub fn generate(
    world: &CollisionWorld,
    model: &KinematicModel,
    areas: Vec<AreaOfInterest>,
    home: JointConfig,
    fingerprint: [u8; 32],
    opts: &GenerateOptions,
) -> Result<(TrajectoryDb, GenerationReport), GenerateError> {
    for a in &areas {
        a.validate()?;
    }
    if world.config_in_collision(model, &home) {
        return Err(GenerateError::HomeInCollision);
    }
    let t0 = Instant::now();

    let mut keys: Vec<EntryKey> = Vec::new();
    for (ai, area) in areas.iter().enumerate() {
        for cell in area.cells() {
            for rotation in 0..area.rotations.len() as u32 {
                keys.push(EntryKey { area: ai as u32, cell, rotation });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(EntryKey, Result<DbEntry, MissReason>, GenerationRecord)> =
        pool.install(|| {
            keys.par_iter()
                .map(|key| {
                    let (entry, record) = plan_entry(world, model, &areas, &home, key, opts);
                    (*key, entry, record)
                })
                .collect()
        });

    let mut entries = BTreeMap::new();
    let mut missing = BTreeMap::new();
    let mut records = Vec::with_capacity(results.len());
    for (key, entry, record) in results {
        match entry {
            Ok(e) => {
                entries.insert(key, e);
            }
            Err(reason) => {
                missing.insert(key, reason);
            }
        }
        records.push(record);
    }

    let db = TrajectoryDb {
        fingerprint,
        home,
        areas,
        entries,
        missing,
        gen_params: opts.planner,
        db_seed: opts.db_seed,
    };
    let report = GenerationReport { records, wall_time_s: t0.elapsed().as_secs_f64() };
    Ok((db, report))
}

fn plan_entry(
    world: &CollisionWorld,
    model: &KinematicModel,
    areas: &[AreaOfInterest],
    home: &JointConfig,
    key: &EntryKey,
    opts: &GenerateOptions,
) -> (Result<DbEntry, MissReason>, GenerationRecord) {
    let area = &areas[key.area as usize];
    let target = area.cell_pose(&key.cell, key.rotation);
    let seed = entry_seed(opts.db_seed, key);
    let mut record = GenerationRecord {
        key: *key,
        status: Ok(()),
        forward_time_s: 0.0,
        backward_time_s: 0.0,
        forward_waypoints: 0,
        backward_waypoints: 0,
    };
    let fail = |mut record: GenerationRecord, reason: MissReason| {
        record.status = Err(reason);
        (Err(reason), record)
    };

    if pose_goal_set(world, model, &target, home).is_empty() {
        let reason = if inverse_kinematics(model, &target).is_empty() {
            MissReason::NoIkSolution
        } else {
            MissReason::AllSolutionsCollide
        };
        return fail(record, reason);
    }

    let forward = match plan_to_pose(world, model, home, &target, &opts.planner.with_seed(seed)) {
        Ok(Some(p)) => p,
        _ => return fail(record, MissReason::ForwardPlanFailed),
    };
    record.forward_time_s = forward.duration.as_secs_f64();
    record.forward_waypoints = forward.trajectory.waypoints().len();

    let end = *forward.trajectory.last();
    let backward =
        match plan_to_config(world, model, &end, home, &opts.planner.with_seed(seed ^ 0x5eed)) {
            Ok(Some(p)) => p,
            _ => return fail(record, MissReason::BackwardPlanFailed),
        };
    record.backward_time_s = backward.duration.as_secs_f64();
    record.backward_waypoints = backward.trajectory.waypoints().len();

    let end_pose = model.fk_unchecked(&end);
    let entry =
        DbEntry { forward: forward.trajectory, backward: backward.trajectory, end_pose };
    (Ok(entry), record)
}

/// Entry serving a target pose: the cell containing the position, then the
/// stored end orientation geodesically nearest the target orientation. Ties
/// resolve to the smallest rotation index.
pub fn lookup_forward<'db>(
    db: &'db TrajectoryDb,
    target: &Pose,
) -> Option<(&'db DbEntry, usize)> {
    let area_idx = db.area_containing(&target.position)?;
    let area = &db.areas[area_idx];
    let cell = area.cell_containing(&target.position)?;
    let mut best: Option<(&DbEntry, f64)> = None;
    for rotation in 0..area.rotations.len() as u32 {
        let key = EntryKey { area: area_idx as u32, cell, rotation };
        if let Some(entry) = db.entries.get(&key) {
            let d = quat_angle(&entry.end_pose.orientation(), &target.orientation());
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((entry, d));
            }
        }
    }
    best.map(|(e, _)| (e, area_idx))
}

/// Entry whose backward trajectory starts nearest the current configuration,
/// gated on the current flange position lying inside some area. All stored
/// backward trajectories compete; ties resolve to the smallest key.
pub fn lookup_backward<'db>(
    db: &'db TrajectoryDb,
    model: &KinematicModel,
    current: &JointConfig,
) -> Option<(&'db DbEntry, usize)> {
    let fk = model.fk_unchecked(current);
    db.area_containing(&fk.position)?;
    let mut best: Option<(&EntryKey, &DbEntry, f64)> = None;
    for (key, entry) in &db.entries {
        let d = entry.backward.first().distance(current);
        if best.as_ref().map_or(true, |(_, _, bd)| d < *bd) {
            best = Some((key, entry, d));
        }
    }
    best.map(|(key, e, _)| (e, key.area as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_areas_match_stock_counts() {
        let areas = default_areas(&SceneConfig::default()).unwrap();
        assert_eq!(areas.len(), 2);
        assert_eq!(areas[0].cell_count(), 960);
        assert_eq!(areas[0].rotations.len(), 24);
        assert_eq!(areas[1].cell_count(), 16);
        assert_eq!(areas[1].rotations.len(), 8);
    }

    #[test]
    fn oversized_grid_rejected() {
        let scene = SceneConfig::default();
        let err = trolley_area(&scene, [20, 12, 10], 0.055, rotation_set(8, &[0.0])).unwrap_err();
        assert!(matches!(err, AreaError::OutOfBounds(_)));
    }

    #[test]
    fn cell_round_trip() {
        let areas = default_areas(&SceneConfig::default()).unwrap();
        let area = &areas[0];
        for cell in area.cells().step_by(97) {
            let center = area.cell_center(&cell);
            assert!(area.contains(&center));
            assert_eq!(area.cell_containing(&center), Some(cell));
        }
    }

    #[test]
    fn outside_points_not_contained() {
        let areas = default_areas(&SceneConfig::default()).unwrap();
        let high = Point3::new(0.6, 0.0, 1.0);
        assert!(!areas.iter().any(|a| a.contains(&high)));
    }

    #[test]
    fn entry_seed_spreads() {
        let a = entry_seed(0, &EntryKey { area: 0, cell: CellIndex { ix: 0, iy: 0, iz: 0 }, rotation: 0 });
        let b = entry_seed(0, &EntryKey { area: 0, cell: CellIndex { ix: 0, iy: 0, iz: 0 }, rotation: 1 });
        let c = entry_seed(1, &EntryKey { area: 0, cell: CellIndex { ix: 0, iy: 0, iz: 0 }, rotation: 0 });
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
