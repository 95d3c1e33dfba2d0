//! Inverse kinematics: closed-form solutions for UR-style wrists, with a
//! deterministic multi-start numeric fallback for other serial chains.

use super::{wrap_angle, JointConfig, KinematicModel, Pose, JOINT_COUNT};
use crate::collision::CollisionWorld;
use nalgebra::{Isometry3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Residual accepted when filtering candidate solutions. Analytic solutions
/// land near 1e-12; the public contract is 1e-6.
const RESIDUAL_POS: f64 = 1e-9;
const RESIDUAL_ANG: f64 = 1e-9;
/// Solutions closer than this (wrapped joint-space distance) are duplicates.
const DISTINCT_EPS: f64 = 1e-3;

/// Joint-space distance flavor used when ranking IK solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    MaxAbs,
}

/// All distinct joint solutions reaching `target`, each verified against
/// forward kinematics. Unreachable targets yield an empty list.
pub fn inverse_kinematics(model: &KinematicModel, target: &Pose) -> Vec<JointConfig> {
    let mut candidates = if ur_family(model) {
        solve_ur(model, target)
    } else {
        solve_numeric(model, target)
    };
    candidates.retain(|q| residual_ok(model, q, target));
    dedupe_sorted(candidates)
}

/// Collision-free IK solution minimizing joint-space distance to `reference`.
pub fn ik_closest(
    model: &KinematicModel,
    target: &Pose,
    reference: &JointConfig,
    world: &CollisionWorld,
) -> Option<JointConfig> {
    ik_closest_weighted(model, target, reference, world, &[1.0; JOINT_COUNT], DistanceMetric::Euclidean)
}

pub fn ik_closest_weighted(
    model: &KinematicModel,
    target: &Pose,
    reference: &JointConfig,
    world: &CollisionWorld,
    weights: &[f64; JOINT_COUNT],
    metric: DistanceMetric,
) -> Option<JointConfig> {
    let mut best: Option<(f64, JointConfig)> = None;
    for q in inverse_kinematics(model, target) {
        // Same solution modulo 2*pi, on the branch nearest the reference so
        // joint-space distance reflects what a planner would traverse.
        let q = rebranch_toward(model, &q, reference);
        if world.config_in_collision(model, &q) {
            continue;
        }
        let d = match metric {
            DistanceMetric::Euclidean => q.weighted_distance(reference, weights),
            DistanceMetric::MaxAbs => q.max_abs_distance(reference, weights),
        };
        // Strict `<` keeps the first of equally distant solutions; the
        // candidate list is already deterministically ordered.
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, q));
        }
    }
    best.map(|(_, q)| q)
}

/// Shift each joint by multiples of 2*pi to the in-limit value closest to
/// the reference. The pose is unchanged.
pub fn rebranch_toward(
    model: &KinematicModel,
    q: &JointConfig,
    reference: &JointConfig,
) -> JointConfig {
    let mut out = [0.0; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        let limits = &model.joints[i];
        let w = wrap_angle(q.angle(i));
        let r = reference.angle(i);
        let mut best = q.angle(i);
        let mut best_d = f64::INFINITY;
        for k in [-1.0, 0.0, 1.0] {
            let c = w + k * 2.0 * PI;
            if c >= limits.limit_lo && c <= limits.limit_hi {
                let d = (c - r).abs();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
        }
        out[i] = best;
    }
    JointConfig::new(out)
}

fn residual_ok(model: &KinematicModel, q: &JointConfig, target: &Pose) -> bool {
    let fk = model.fk_unchecked(q);
    fk.position_distance(target) <= RESIDUAL_POS && fk.angular_distance(target) <= RESIDUAL_ANG
}

/// True when the DH table matches the UR wrist structure the closed-form
/// solver assumes: a1=a4=a5=a6=0, d2=d3=0, alpha = [pi/2, 0, 0, pi/2, -pi/2, 0].
fn ur_family(model: &KinematicModel) -> bool {
    const EPS: f64 = 1e-9;
    let j = &model.joints;
    j[0].a.abs() < EPS
        && j[3].a.abs() < EPS
        && j[4].a.abs() < EPS
        && j[5].a.abs() < EPS
        && j[1].d.abs() < EPS
        && j[2].d.abs() < EPS
        && (j[0].alpha - PI / 2.0).abs() < EPS
        && j[1].alpha.abs() < EPS
        && j[2].alpha.abs() < EPS
        && (j[3].alpha - PI / 2.0).abs() < EPS
        && (j[4].alpha + PI / 2.0).abs() < EPS
        && j[5].alpha.abs() < EPS
        && j[1].a.abs() > EPS
        && j[2].a.abs() > EPS
        && j[3].d.abs() > EPS
}

fn solve_ur(model: &KinematicModel, target: &Pose) -> Vec<JointConfig> {
    let a2 = model.joints[1].a;
    let a3 = model.joints[2].a;
    let d4 = model.joints[3].d;
    let d6 = model.joints[5].d;

    let t = target.to_isometry();
    let rot = t.rotation.to_rotation_matrix();
    let x_axis = rot.matrix().column(0).into_owned();
    let y_axis = rot.matrix().column(1).into_owned();
    let z_axis = rot.matrix().column(2).into_owned();
    let p = t.translation.vector;

    // Wrist-2 origin; its lateral offset from the shoulder plane fixes q1.
    let p5 = p - d6 * z_axis;
    let r2 = p5.x * p5.x + p5.y * p5.y;
    if r2 < d4 * d4 {
        return Vec::new();
    }
    let base = p5.y.atan2(p5.x);
    let off = (d4 / r2.sqrt()).clamp(-1.0, 1.0).acos();

    let mut out = Vec::with_capacity(8);
    for s1 in [1.0, -1.0] {
        let q1 = base + s1 * off + PI / 2.0;
        let (sin1, cos1) = q1.sin_cos();
        // Joint-2 axis direction expressed through the target orientation.
        let m = Vector3::new(sin1, -cos1, 0.0);
        let ux = x_axis.dot(&m);
        let uy = y_axis.dot(&m);
        let uz = z_axis.dot(&m);
        let h = ux.hypot(uy);
        for s5 in [1.0, -1.0] {
            let q5 = (s5 * h).atan2(uz);
            let q6 = if h < 1e-12 {
                0.0 // wrist singular: fold the spin into q4 below
            } else {
                (-uy * s5).atan2(ux * s5)
            };

            let t01 = model.joint_transform(0, q1);
            let t45 = model.joint_transform(4, q5);
            let t56 = model.joint_transform(5, q6);
            let t14: Isometry3<f64> = t01.inverse() * t * (t45 * t56).inverse();
            let p14 = t14.translation.vector;

            let rr = p14.x * p14.x + p14.y * p14.y;
            let cos3 = (rr - a2 * a2 - a3 * a3) / (2.0 * a2 * a3);
            if cos3.abs() > 1.0 + 1e-9 {
                continue;
            }
            let q3_mag = cos3.clamp(-1.0, 1.0).acos();
            let r14 = t14.rotation.to_rotation_matrix();
            let phi = r14[(1, 0)].atan2(r14[(0, 0)]);
            for s3 in [1.0, -1.0] {
                let q3 = s3 * q3_mag;
                let q2 = p14.y.atan2(p14.x) - (a3 * q3.sin()).atan2(a2 + a3 * q3.cos());
                let q4 = phi - q2 - q3;
                if let Some(q) = into_limits(model, [q1, q2, q3, q4, q5, q6]) {
                    out.push(q);
                }
            }
        }
    }
    out
}

/// Wrap each joint to `(-pi, pi]`, then pick an in-limit 2*pi representative.
fn into_limits(model: &KinematicModel, raw: [f64; JOINT_COUNT]) -> Option<JointConfig> {
    let mut fitted = [0.0; JOINT_COUNT];
    for (i, (v, j)) in raw.iter().zip(model.joints.iter()).enumerate() {
        let w = wrap_angle(*v);
        let candidates = [w, w - 2.0 * PI, w + 2.0 * PI];
        let pick = candidates
            .iter()
            .find(|c| **c >= j.limit_lo && **c <= j.limit_hi)?;
        fitted[i] = *pick;
    }
    Some(JointConfig::new(fitted))
}

fn dedupe_sorted(mut candidates: Vec<JointConfig>) -> Vec<JointConfig> {
    candidates.sort_by(|a, b| {
        a.angles()
            .iter()
            .zip(b.angles().iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<JointConfig> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if out.iter().all(|k| k.distance(&c) > DISTINCT_EPS) {
            out.push(c);
        }
    }
    out
}

/// Damped least-squares IK from a deterministic set of seeds; used for
/// configured arms outside the UR family.
fn solve_numeric(model: &KinematicModel, target: &Pose) -> Vec<JointConfig> {
    const STARTS: usize = 24;
    const ITERS: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(pose_seed(target));
    let mut found = Vec::new();
    for start in 0..STARTS {
        let mut q = if start == 0 {
            let mid: Vec<f64> =
                model.joints.iter().map(|j| 0.5 * (j.limit_lo + j.limit_hi)).collect();
            JointConfig::new([mid[0], mid[1], mid[2], mid[3], mid[4], mid[5]])
        } else {
            let mut a = [0.0; JOINT_COUNT];
            for (v, j) in a.iter_mut().zip(model.joints.iter()) {
                *v = rng.gen_range(j.limit_lo..=j.limit_hi);
            }
            JointConfig::new(a)
        };
        for _ in 0..ITERS {
            let e = pose_error(model, &q, target);
            if e.norm() < 1e-12 {
                break;
            }
            let jac = numeric_jacobian(model, &q, target);
            let jjt = &jac * jac.transpose()
                + nalgebra::Matrix6::identity() * 1e-9;
            let Some(inv) = jjt.try_inverse() else { break };
            let mut step = jac.transpose() * (inv * e);
            let n = step.norm();
            if n > 0.5 {
                step *= 0.5 / n;
            }
            let mut a = *q.angles();
            for (i, v) in a.iter_mut().enumerate() {
                *v = (*v + step[i]).clamp(model.joints[i].limit_lo, model.joints[i].limit_hi);
            }
            q = JointConfig::new(a);
        }
        if residual_ok(model, &q, target) {
            if let Some(fitted) = into_limits(model, *q.wrapped().angles()) {
                if residual_ok(model, &fitted, target) {
                    found.push(fitted);
                }
            }
        }
    }
    found
}

fn pose_error(model: &KinematicModel, q: &JointConfig, target: &Pose) -> Vector6<f64> {
    let fk = model.fk_unchecked(q);
    let dp = target.position - fk.position;
    let dq: UnitQuaternion<f64> = target.orientation() * fk.orientation().inverse();
    let rv = dq.scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, rv.x, rv.y, rv.z)
}

fn numeric_jacobian(
    model: &KinematicModel,
    q: &JointConfig,
    target: &Pose,
) -> nalgebra::Matrix6<f64> {
    const H: f64 = 1e-6;
    let mut jac = nalgebra::Matrix6::zeros();
    for col in 0..JOINT_COUNT {
        let mut hi = *q.angles();
        let mut lo = *q.angles();
        hi[col] += H;
        lo[col] -= H;
        let ehi = pose_error(model, &JointConfig::new(hi), target);
        let elo = pose_error(model, &JointConfig::new(lo), target);
        // d(error)/dq = -d(fk)/dq; the DLS step follows the error gradient.
        let g = (elo - ehi) / (2.0 * H);
        jac.set_column(col, &g);
    }
    jac
}

fn pose_seed(p: &Pose) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut mix = |bits: u64| {
        h ^= bits;
        h = h.wrapping_mul(0x1000_0000_01b3);
    };
    mix(p.position.x.to_bits());
    mix(p.position.y.to_bits());
    mix(p.position.z.to_bits());
    let q = p.orientation();
    mix(q.w.to_bits());
    mix(q.i.to_bits());
    mix(q.j.to_bits());
    mix(q.k.to_bits());
    h
}
