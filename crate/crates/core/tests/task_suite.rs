//! Episode-level behavior: scripted policies, reward accounting, sampling
//! statistics and soundness of every executed trajectory.

use boostplan_core::boosted::ProximityParams;
use boostplan_core::collision::{build_world, SceneConfig};
use boostplan_core::kinematics::{JointConfig, KinematicModel};
use boostplan_core::perception::characteristic_points;
use boostplan_core::rrt::PlannerParams;
use boostplan_core::task_env::{
    bag_bounding_box, build_observation, lesson_scheduler, run_episode, sample_scenario,
    HardnessLevel, HeightMode, HoverPolicy, OraclePolicy, Scenario, TaskConfig, TaskContext,
    TerminalReason,
};

const HOME: [f64; 6] = [
    -0.57814338015565259,
    -2.35611800916355296,
    2.47501131125391050,
    -1.68968962888525454,
    -1.57079632679489656,
    0.99265294663924386,
];

fn context(model: &KinematicModel) -> TaskContext<'_> {
    TaskContext {
        scene: SceneConfig::default(),
        model,
        db: None,
        home: JointConfig::new(HOME),
        planner: PlannerParams::default(),
        prox: ProximityParams::default(),
        cfg: TaskConfig::default(),
    }
}

fn easy_scenario(seed: u64) -> Scenario {
    Scenario {
        hardness: HardnessLevel::Floor,
        floor_z: -0.40,
        bag_xy: [0.58, 0.05],
        bag_yaw: 0.3,
        vertical: false,
        seed,
    }
}

#[test]
fn oracle_policy_succeeds_first_attempt_with_full_reward() {
    let model = KinematicModel::ur10();
    let ctx = context(&model);
    let outcome = run_episode(&mut OraclePolicy, &easy_scenario(4), &ctx);
    assert_eq!(outcome.terminal, TerminalReason::Success);
    assert_eq!(outcome.attempts.len(), 1, "success must terminate immediately");
    let a = &outcome.attempts[0];
    assert!(a.achievable && a.grasped && a.pulled);
    assert!((outcome.total_reward - 8.0).abs() < 1e-12);
    let macro_result = outcome.macro_result.as_ref().unwrap();
    assert!(macro_result.completed);
    assert_eq!(macro_result.legs.len(), 6);
}

#[test]
fn hover_policy_exhausts_attempts_with_achievable_only_reward() {
    let model = KinematicModel::ur10();
    let ctx = context(&model);
    let scenario = Scenario { floor_z: -0.63, ..easy_scenario(9) };
    let outcome = run_episode(&mut HoverPolicy, &scenario, &ctx);
    assert_eq!(outcome.terminal, TerminalReason::AttemptsExhausted);
    assert_eq!(outcome.attempts.len(), 6);
    for a in &outcome.attempts {
        assert!(a.achievable, "hover pose should be reachable");
        assert!(!a.grasped);
    }
    // 1.0 * (1.0 + 0.55 + 0.3 + 0.15 + 0.08 + 0.04)
    assert!((outcome.total_reward - 2.12).abs() < 1e-9);
    assert!(outcome.macro_result.is_none());
}

#[test]
fn episode_trajectories_all_collision_free() {
    let model = KinematicModel::ur10();
    let ctx = context(&model);
    let scenario = easy_scenario(12);
    let outcome = run_episode(&mut OraclePolicy, &scenario, &ctx);
    let scene = ctx.scene_for(&scenario);
    let world = build_world(&scene, &model).unwrap();
    let mut checked = 0;
    for attempt in &outcome.attempts {
        for plan in &attempt.plans {
            if let Some(t) = &plan.trajectory {
                assert!(t.is_collision_free(&world, &model, 0.005));
                checked += 1;
            }
        }
    }
    for leg in &outcome.macro_result.unwrap().legs {
        if let Some(t) = &leg.result.trajectory {
            assert!(t.is_collision_free(&world, &model, 0.005));
            checked += 1;
        }
    }
    assert!(checked >= 8, "expected attempt plans plus six macro legs, got {checked}");
}

#[test]
fn class_frequencies_uniform_over_full_lesson() {
    let scene = SceneConfig::default();
    let cfg = TaskConfig::default();
    let lesson = HardnessLevel::curriculum_order();
    let mut counts = std::collections::HashMap::new();
    let n = 10_000u64;
    for seed in 0..n {
        let s = sample_scenario(&lesson, &HeightMode::default(), &scene, &cfg, seed);
        *counts.entry(s.hardness.code()).or_insert(0u64) += 1;
    }
    // Multinomial: p = 1/10, sigma = sqrt(n p (1-p)) = 30; require 3 sigma.
    for class in lesson {
        let c = counts.get(&class.code()).copied().unwrap_or(0);
        assert!(
            (c as f64 - 1000.0).abs() <= 90.0,
            "class {} count {c} outside 3 sigma",
            class.code()
        );
    }
}

#[test]
fn observation_translation_equivariance() {
    let cfg = TaskConfig { cloud_noise_sigma: 0.0, ..TaskConfig::default() };
    let base = Scenario {
        hardness: HardnessLevel::Floor,
        floor_z: -0.5,
        bag_xy: [0.5, 0.0],
        bag_yaw: 0.25,
        vertical: false,
        seed: 77,
    };
    let t = [0.0625, -0.125, 0.25];
    let moved = Scenario {
        bag_xy: [base.bag_xy[0] + t[0], base.bag_xy[1] + t[1]],
        floor_z: base.floor_z + t[2],
        ..base.clone()
    };
    let obs_a = build_observation(&base, &characteristic_points(&base.cloud(&cfg, 0)).unwrap());
    let obs_b = build_observation(&moved, &characteristic_points(&moved.cloud(&cfg, 0)).unwrap());
    for i in 0..15 {
        let shift = t[i % 3];
        assert!(
            (obs_b.features[i] - (obs_a.features[i] + shift)).abs() < 1e-12,
            "feature {i} not shifted by {shift}"
        );
    }
}

#[test]
fn vertical_scenario_sets_flag_and_box() {
    let scene = SceneConfig::default();
    let cfg = TaskConfig::default();
    let s = sample_scenario(&[HardnessLevel::Vertical], &HeightMode::Fixed(-0.63), &scene, &cfg, 3);
    assert!(s.vertical);
    let points = characteristic_points(&s.cloud(&cfg, 0)).unwrap();
    let obs = build_observation(&s, &points);
    assert!(obs.vertical);
    let bbox = bag_bounding_box(&s, &cfg);
    // Standing on the long edge: the bag top sits a bag-width above the floor.
    assert!((bbox.max.z - cfg.approach_headroom - (-0.63 + 0.18)).abs() < 1e-9);
}

#[test]
fn flat_centered_bag_center_point_near_bag_center() {
    let cfg = TaskConfig { cloud_noise_sigma: 0.0, ..TaskConfig::default() };
    let s = easy_scenario(21);
    let points = characteristic_points(&s.cloud(&cfg, 0)).unwrap();
    let a4 = points.points[4];
    assert!((a4.x - s.bag_xy[0]).abs() < 0.02);
    assert!((a4.y - s.bag_xy[1]).abs() < 0.02);
}

#[test]
fn scheduler_full_curriculum_unlocks_in_order() {
    let cfg = TaskConfig { lesson_window: 2, lesson_threshold: 1.0, ..TaskConfig::default() };
    let history = vec![true; 18];
    let lesson = lesson_scheduler(&history, &cfg);
    assert_eq!(lesson, HardnessLevel::curriculum_order().to_vec());
}
