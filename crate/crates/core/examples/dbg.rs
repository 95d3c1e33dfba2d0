use boostplan_core::benchmark::run_benchmark;
use boostplan_core::collision::build_world;
use boostplan_core::config::Config;
use boostplan_core::trajectory_db::{generate, save, GenerateOptions};
use std::time::Instant;

fn main() {
    let cfg = Config::desk();
    let model = cfg.model.clone();
    let world = build_world(&cfg.scene, &model).unwrap();
    let areas = cfg.build_areas().unwrap();
    let t0 = Instant::now();
    let opts = GenerateOptions { planner: cfg.planner, workers: 1, db_seed: cfg.seed };
    let (db, report) = generate(&world, &model, areas, cfg.home_config(), cfg.fingerprint(), &opts).unwrap();
    println!("gen: {:?} | {}", t0.elapsed(), report.summary());
    save(&db, std::path::Path::new("/tmp/desk.stdb")).unwrap();

    let t0 = Instant::now();
    let rep = run_benchmark(&db, &cfg.scene, &model, &cfg.planner, &cfg.proximity, &cfg.task, &[1, 5, 20], 42).unwrap();
    println!("bench: {:?}", t0.elapsed());
    print!("{}", rep.markdown());
}
