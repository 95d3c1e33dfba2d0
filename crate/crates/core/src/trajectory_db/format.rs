//! Self-describing binary format for the trajectory database.
//!
//! Fixed little-endian layout, documented in docs/db_format.md: magic and
//! version, world fingerprint, home configuration, generation parameters,
//! area definitions, then length-prefixed present entries and missing keys.
//! Wall-clock data never enters the file so identical inputs produce
//! identical bytes.

use super::{
    AreaOfInterest, CellIndex, DbEntry, EntryKey, MissReason, TrajectoryDb,
};
use crate::kinematics::{JointConfig, Pose, JOINT_COUNT};
use crate::rrt::{PlannerParams, Trajectory};
use nalgebra::{Point3, Quaternion, UnitQuaternion};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SUPPTRAJ";

#[derive(Debug, Error)]
pub enum DbError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corrupt database file: {0}")]
    Corrupt(String),
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("database fingerprint does not match the configured scene/model")]
    FingerprintMismatch,
}

pub fn save(db: &TrajectoryDb, path: &Path) -> Result<(), DbError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    w.write_all(&db.fingerprint)?;
    put_config(&mut w, &db.home)?;
    put_u64(&mut w, db.db_seed)?;
    put_params(&mut w, &db.gen_params)?;

    put_u32(&mut w, db.areas.len() as u32)?;
    for area in &db.areas {
        put_bytes(&mut w, area.name.as_bytes())?;
        put_pose(&mut w, &area.origin)?;
        for d in area.dims {
            put_u32(&mut w, d)?;
        }
        put_f64(&mut w, area.cell_size)?;
        put_u32(&mut w, area.rotations.len() as u32)?;
        for r in &area.rotations {
            put_quat(&mut w, r)?;
        }
    }

    put_u64(&mut w, db.entries.len() as u64)?;
    for (key, entry) in &db.entries {
        put_key(&mut w, key)?;
        put_pose(&mut w, &entry.end_pose)?;
        put_trajectory(&mut w, &entry.forward)?;
        put_trajectory(&mut w, &entry.backward)?;
    }

    put_u64(&mut w, db.missing.len() as u64)?;
    for (key, reason) in &db.missing {
        put_key(&mut w, key)?;
        put_u8(
            &mut w,
            match reason {
                MissReason::NoIkSolution => 0,
                MissReason::AllSolutionsCollide => 1,
                MissReason::ForwardPlanFailed => 2,
                MissReason::BackwardPlanFailed => 3,
            },
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Load a database, verifying the format version and, when given, the world
/// fingerprint. `allow_fingerprint_mismatch` downgrades the fingerprint check
/// for deliberate cross-scene use.
pub fn load(
    path: &Path,
    expected_fingerprint: Option<&[u8; 32]>,
    allow_fingerprint_mismatch: bool,
) -> Result<TrajectoryDb, DbError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(DbError::Corrupt("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(DbError::VersionMismatch { found: version });
    }
    let mut fingerprint = [0u8; 32];
    read_exact(&mut r, &mut fingerprint)?;
    if let Some(expect) = expected_fingerprint {
        if &fingerprint != expect && !allow_fingerprint_mismatch {
            return Err(DbError::FingerprintMismatch);
        }
    }
    let home = get_config(&mut r)?;
    let db_seed = get_u64(&mut r)?;
    let gen_params = get_params(&mut r)?;

    let n_areas = get_u32(&mut r)? as usize;
    if n_areas > 1024 {
        return Err(DbError::Corrupt("implausible area count".into()));
    }
    let mut areas = Vec::with_capacity(n_areas);
    for _ in 0..n_areas {
        let name = String::from_utf8(get_bytes(&mut r)?)
            .map_err(|_| DbError::Corrupt("area name not utf-8".into()))?;
        let origin = get_pose(&mut r)?;
        let dims = [get_u32(&mut r)?, get_u32(&mut r)?, get_u32(&mut r)?];
        let cell_size = get_f64(&mut r)?;
        let n_rot = get_u32(&mut r)? as usize;
        if n_rot > 1 << 20 {
            return Err(DbError::Corrupt("implausible rotation count".into()));
        }
        let mut rotations = Vec::with_capacity(n_rot);
        for _ in 0..n_rot {
            rotations.push(get_quat(&mut r)?);
        }
        areas.push(AreaOfInterest { name, origin, dims, cell_size, rotations });
    }

    let n_entries = get_u64(&mut r)?;
    let mut entries = BTreeMap::new();
    for _ in 0..n_entries {
        let key = get_key(&mut r)?;
        let end_pose = get_pose(&mut r)?;
        let forward = get_trajectory(&mut r)?;
        let backward = get_trajectory(&mut r)?;
        entries.insert(key, DbEntry { forward, backward, end_pose });
    }

    let n_missing = get_u64(&mut r)?;
    let mut missing = BTreeMap::new();
    for _ in 0..n_missing {
        let key = get_key(&mut r)?;
        let reason = match get_u8(&mut r)? {
            0 => MissReason::NoIkSolution,
            1 => MissReason::AllSolutionsCollide,
            2 => MissReason::ForwardPlanFailed,
            3 => MissReason::BackwardPlanFailed,
            other => return Err(DbError::Corrupt(format!("unknown miss reason {other}"))),
        };
        missing.insert(key, reason);
    }

    // The layout is fully determined; trailing bytes mean truncated writes
    // got concatenated or the file is not what it claims to be.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => {}
        _ => return Err(DbError::Corrupt("trailing bytes".into())),
    }

    Ok(TrajectoryDb { fingerprint, home, areas, entries, missing, gen_params, db_seed })
}

fn put_u8<W: Write>(w: &mut W, v: u8) -> io::Result<()> {
    w.write_all(&[v])
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_bytes<W: Write>(w: &mut W, b: &[u8]) -> io::Result<()> {
    put_u32(w, b.len() as u32)?;
    w.write_all(b)
}

fn put_config<W: Write>(w: &mut W, q: &JointConfig) -> io::Result<()> {
    for v in q.angles() {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn put_quat<W: Write>(w: &mut W, q: &UnitQuaternion<f64>) -> io::Result<()> {
    for v in [q.w, q.i, q.j, q.k] {
        put_f64(w, v)?;
    }
    Ok(())
}

fn put_pose<W: Write>(w: &mut W, p: &Pose) -> io::Result<()> {
    for v in [p.position.x, p.position.y, p.position.z] {
        put_f64(w, v)?;
    }
    put_quat(w, &p.orientation())
}

fn put_key<W: Write>(w: &mut W, k: &EntryKey) -> io::Result<()> {
    for v in [k.area, k.cell.ix, k.cell.iy, k.cell.iz, k.rotation] {
        put_u32(w, v)?;
    }
    Ok(())
}

fn put_params<W: Write>(w: &mut W, p: &PlannerParams) -> io::Result<()> {
    put_f64(w, p.step)?;
    put_f64(w, p.goal_bias)?;
    put_u64(w, p.max_iterations)?;
    put_u64(w, p.seed)?;
    put_u32(w, p.shortcut_passes)?;
    put_f64(w, p.collision_resolution)?;
    put_u8(w, p.bidirectional as u8)
}

fn put_trajectory<W: Write>(w: &mut W, t: &Trajectory) -> io::Result<()> {
    put_u32(w, t.waypoints().len() as u32)?;
    for q in t.waypoints() {
        put_config(w, q)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), DbError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DbError::Corrupt("unexpected end of file".into())
        } else {
            DbError::Io(e)
        }
    })
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8, DbError> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, DbError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, DbError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64, DbError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, DbError> {
    let n = get_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(DbError::Corrupt("implausible string length".into()));
    }
    let mut b = vec![0u8; n];
    read_exact(r, &mut b)?;
    Ok(b)
}

fn get_config<R: Read>(r: &mut R) -> Result<JointConfig, DbError> {
    let mut a = [0.0; JOINT_COUNT];
    for v in &mut a {
        *v = get_f64(r)?;
    }
    Ok(JointConfig::new(a))
}

fn get_quat<R: Read>(r: &mut R) -> Result<UnitQuaternion<f64>, DbError> {
    let w = get_f64(r)?;
    let i = get_f64(r)?;
    let j = get_f64(r)?;
    let k = get_f64(r)?;
    // Stored quaternions are unit by construction; renormalizing here would
    // perturb the bits and break round-trip equality.
    Ok(UnitQuaternion::new_unchecked(Quaternion::new(w, i, j, k)))
}

fn get_pose<R: Read>(r: &mut R) -> Result<Pose, DbError> {
    let x = get_f64(r)?;
    let y = get_f64(r)?;
    let z = get_f64(r)?;
    let q = get_quat(r)?;
    Ok(Pose::new(Point3::new(x, y, z), q))
}

fn get_key<R: Read>(r: &mut R) -> Result<EntryKey, DbError> {
    let area = get_u32(r)?;
    let ix = get_u32(r)?;
    let iy = get_u32(r)?;
    let iz = get_u32(r)?;
    let rotation = get_u32(r)?;
    Ok(EntryKey { area, cell: CellIndex { ix, iy, iz }, rotation })
}

fn get_params<R: Read>(r: &mut R) -> Result<PlannerParams, DbError> {
    Ok(PlannerParams {
        step: get_f64(r)?,
        goal_bias: get_f64(r)?,
        max_iterations: get_u64(r)?,
        seed: get_u64(r)?,
        shortcut_passes: get_u32(r)?,
        collision_resolution: get_f64(r)?,
        bidirectional: get_u8(r)? != 0,
    })
}

fn get_trajectory<R: Read>(r: &mut R) -> Result<Trajectory, DbError> {
    let n = get_u32(r)? as usize;
    if n == 0 || n > 1 << 24 {
        return Err(DbError::Corrupt("implausible waypoint count".into()));
    }
    let mut wps = Vec::with_capacity(n);
    for _ in 0..n {
        wps.push(get_config(r)?);
    }
    if n == 1 {
        Ok(Trajectory::trivial(wps[0]))
    } else {
        Trajectory::new(wps).map_err(|e| DbError::Corrupt(e.into()))
    }
}
