//! Kinematics contract tests against an independent transform-chain oracle.

use boostplan_core::collision::{build_world, SceneConfig};
use boostplan_core::kinematics::{
    forward_kinematics, ik_closest, inverse_kinematics, wrap_angle, JointConfig, KinematicModel,
    Pose,
};
use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Plain 4x4 homogeneous matrices multiplied by hand; shares nothing with the
/// implementation path it checks.
mod oracle {
    use super::*;

    pub type Mat4 = [[f64; 4]; 4];

    pub fn identity() -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    pub fn dh_row(a: f64, d: f64, alpha: f64, theta: f64) -> Mat4 {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = alpha.sin_cos();
        // Rz(theta) * Tz(d) * Tx(a) * Rx(alpha), expanded.
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn chain(model: &KinematicModel, q: &JointConfig) -> Mat4 {
        let mut t = identity();
        for (j, theta) in model.joints.iter().zip(q.angles().iter()) {
            t = mul(&t, &dh_row(j.a, j.d, j.alpha, *theta));
        }
        t
    }

    /// Angle of the relative rotation between an oracle matrix and a pose,
    /// computed in atan2 form to stay exact near zero.
    pub fn rotation_gap(m: &Mat4, pose: &Pose) -> f64 {
        let r = pose.orientation().to_rotation_matrix();
        // Rel = R_oracle^T * R_pose
        let mut rel = [[0.0; 3]; 3];
        for (i, row) in rel.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| m[k][i] * r[(k, j)]).sum();
            }
        }
        let trace = rel[0][0] + rel[1][1] + rel[2][2];
        let skew = [
            rel[2][1] - rel[1][2],
            rel[0][2] - rel[2][0],
            rel[1][0] - rel[0][1],
        ];
        let sin = 0.5 * (skew[0].powi(2) + skew[1].powi(2) + skew[2].powi(2)).sqrt();
        let cos = 0.5 * (trace - 1.0);
        sin.atan2(cos)
    }
}

fn random_config(model: &KinematicModel, rng: &mut impl Rng) -> JointConfig {
    let mut a = [0.0; 6];
    for (v, j) in a.iter_mut().zip(model.joints.iter()) {
        *v = rng.gen_range(j.limit_lo..=j.limit_hi);
    }
    JointConfig::new(a)
}

#[test]
fn zero_config_matches_oracle() {
    let model = KinematicModel::ur10();
    let q = JointConfig::zeros();
    let m = oracle::chain(&model, &q);
    let pose = forward_kinematics(&model, &q).unwrap();
    for (i, c) in [pose.position.x, pose.position.y, pose.position.z].iter().enumerate() {
        assert!((c - m[i][3]).abs() < 1e-12, "axis {i}: {c} vs {}", m[i][3]);
    }
    assert!(oracle::rotation_gap(&m, &pose) < 1e-12);
}

#[test]
fn fk_matches_oracle_on_random_configs() {
    let model = KinematicModel::ur10();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let q = random_config(&model, &mut rng);
        let m = oracle::chain(&model, &q);
        let pose = forward_kinematics(&model, &q).unwrap();
        let dp = ((pose.position.x - m[0][3]).powi(2)
            + (pose.position.y - m[1][3]).powi(2)
            + (pose.position.z - m[2][3]).powi(2))
        .sqrt();
        assert!(dp < 1e-10, "position gap {dp}");
        assert!(oracle::rotation_gap(&m, &pose) < 1e-10);
    }
}

#[test]
fn fk_matches_oracle_on_non_ur_chain() {
    // A made-up serial arm exercises the generic FK path.
    let mut model = KinematicModel::ur10();
    model.joints[0].a = 0.05;
    model.joints[1].d = 0.1;
    model.joints[2].alpha = 0.3;
    model.joints[4].alpha = 1.1;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let q = random_config(&model, &mut rng);
        let m = oracle::chain(&model, &q);
        let pose = forward_kinematics(&model, &q).unwrap();
        let dp = ((pose.position.x - m[0][3]).powi(2)
            + (pose.position.y - m[1][3]).powi(2)
            + (pose.position.z - m[2][3]).powi(2))
        .sqrt();
        assert!(dp < 1e-10);
        assert!(oracle::rotation_gap(&m, &pose) < 1e-10);
    }
}

#[test]
fn ik_round_trip_recovers_config() {
    let model = KinematicModel::ur10();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for i in 0..200 {
        let q0 = random_config(&model, &mut rng);
        let target = forward_kinematics(&model, &q0).unwrap();
        let solutions = inverse_kinematics(&model, &target);
        assert!(
            !solutions.is_empty(),
            "case {i}: no IK solutions for a pose generated by FK (q0 = {:?})",
            q0
        );
        for s in &solutions {
            let fk = forward_kinematics(&model, s).unwrap();
            assert!(fk.position_distance(&target) < 1e-6);
            assert!(fk.angular_distance(&target) < 1e-6);
        }
        let hit = solutions.iter().any(|s| {
            s.angles()
                .iter()
                .zip(q0.angles().iter())
                .all(|(a, b)| wrap_angle(a - b).abs() < 1e-6)
        });
        assert!(hit, "case {i}: no solution matches q0 = {:?} modulo 2pi", q0);
        checked += 1;
    }
    assert_eq!(checked, 200);
}

#[test]
fn ik_unreachable_target_returns_empty() {
    let model = KinematicModel::ur10();
    let target = Pose::new(Point3::new(10.0, 0.0, 0.0), UnitQuaternion::identity());
    assert!(inverse_kinematics(&model, &target).is_empty());
}

#[test]
fn ik_solutions_are_distinct_and_limited() {
    let model = KinematicModel::ur10();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let q0 = random_config(&model, &mut rng);
        let target = forward_kinematics(&model, &q0).unwrap();
        let sols = inverse_kinematics(&model, &target);
        assert!(sols.len() <= 8, "expected at most 8 solutions, got {}", sols.len());
        for (i, a) in sols.iter().enumerate() {
            for b in sols.iter().skip(i + 1) {
                assert!(a.distance(b) > 1e-3);
            }
        }
    }
}

#[test]
fn ik_closest_returns_reference_when_valid() {
    let model = KinematicModel::ur10();
    let world = build_world(&SceneConfig::default(), &model).unwrap();
    let q0 = JointConfig::new([0.3, -1.1, 1.4, -0.8, 1.2, 0.4]);
    assert!(!world.config_in_collision(&model, &q0));
    let target = forward_kinematics(&model, &q0).unwrap();
    let best = ik_closest(&model, &target, &q0, &world).expect("solution");
    assert!(best.distance(&q0) < 1e-6);
}

#[test]
fn ik_closest_unreachable_absent() {
    let model = KinematicModel::ur10();
    let world = build_world(&SceneConfig::default(), &model).unwrap();
    let target = Pose::new(Point3::new(5.0, 5.0, 5.0), UnitQuaternion::identity());
    assert!(ik_closest(&model, &target, &JointConfig::zeros(), &world).is_none());
}

#[test]
fn ik_numeric_fallback_on_non_ur_chain() {
    let mut model = KinematicModel::ur10();
    model.joints[0].a = 0.05; // breaks the UR template
    let q0 = JointConfig::new([0.4, -1.0, 1.2, -0.5, 1.0, 0.3]);
    let target = forward_kinematics(&model, &q0).unwrap();
    let sols = inverse_kinematics(&model, &target);
    assert!(!sols.is_empty(), "numeric fallback found nothing");
    for s in &sols {
        let fk = forward_kinematics(&model, s).unwrap();
        assert!(fk.position_distance(&target) < 1e-6);
        assert!(fk.angular_distance(&target) < 1e-6);
    }
}

#[test]
fn quaternion_outputs_canonical() {
    let model = KinematicModel::ur10();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let q = random_config(&model, &mut rng);
        let pose = forward_kinematics(&model, &q).unwrap();
        let quat = pose.orientation();
        assert!(quat.w >= 0.0);
        let norm =
            (quat.w * quat.w + quat.i * quat.i + quat.j * quat.j + quat.k * quat.k).sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn base_rotation_symmetry() {
    let model = KinematicModel::ur10();
    let rest = JointConfig::new([0.0, -0.7, 1.1, -0.4, 0.9, 0.2]);
    let mut yawed = *rest.angles();
    yawed[0] = PI / 2.0;
    let p0 = forward_kinematics(&model, &rest).unwrap().position;
    let p1 = forward_kinematics(&model, &JointConfig::new(yawed)).unwrap().position;
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI / 2.0);
    let expect = rot * p0;
    assert!((p1 - expect).norm() < 1e-12);
}
