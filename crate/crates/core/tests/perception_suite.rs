//! Perception contract tests against independently coded brute-force
//! oracles; equality is exact, not approximate.

use boostplan_core::perception::{
    back_project, characteristic_points, rank_regions, CameraIntrinsics, CloudFrame, DepthMap,
    PointCloud, Region,
};
use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force characteristic points: full stable index sorts written out
/// longhand and an exhaustive nearest-point scan.
fn oracle_characteristic(points: &[Point3<f64>]) -> ([Point3<f64>; 5], (f64, f64)) {
    let stable_sort = |input: &[usize], coord: usize| -> Vec<usize> {
        let mut out = input.to_vec();
        // Insertion sort: stability is the point here.
        for i in 1..out.len() {
            let mut j = i;
            while j > 0 && points[out[j]][coord] < points[out[j - 1]][coord] {
                out.swap(j, j - 1);
                j -= 1;
            }
        }
        out
    };
    let base: Vec<usize> = (0..points.len()).collect();
    let s0_s1 = stable_sort(&stable_sort(&base, 1), 0);
    let a0 = points[s0_s1[0]];
    let a1 = points[*s0_s1.last().unwrap()];
    let s1_s0 = stable_sort(&stable_sort(&base, 0), 1);
    let a2 = points[s1_s0[0]];
    let a3 = points[*s1_s0.last().unwrap()];
    let x0 = (a2.x + a3.x) / 2.0;
    let y0 = (a0.y + a1.y) / 2.0;
    let mut best = 0usize;
    for (i, p) in points.iter().enumerate() {
        let d = (p.x - x0).powi(2) + (p.y - y0).powi(2);
        let bd = (points[best].x - x0).powi(2) + (points[best].y - y0).powi(2);
        if d < bd {
            best = i;
        }
    }
    ([a0, a1, a2, a3, points[best]], (x0, y0))
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dyadic: bool) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let sample = |rng: &mut ChaCha8Rng| {
                if dyadic {
                    // Multiples of 2^-8 stay exact under the translations below.
                    rng.gen_range(-512i32..=512) as f64 / 256.0
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            };
            Point3::new(sample(rng), sample(rng), sample(rng))
        })
        .collect();
    PointCloud { points, frame: CloudFrame::Base }
}

#[test]
fn characteristic_points_match_oracle_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..100 {
        // Mix in duplicated coordinates to stress the stable tie behavior.
        let n = rng.gen_range(1..120);
        let mut cloud = random_cloud(&mut rng, n, true);
        if n > 4 {
            let dup = cloud.points[0];
            cloud.points[n / 2] = dup;
        }
        let got = characteristic_points(&cloud).unwrap();
        let (want_pts, want_center) = oracle_characteristic(&cloud.points);
        assert_eq!(got.points, want_pts, "case {case}");
        assert_eq!(got.center_xy, want_center, "case {case}");
    }
}

#[test]
fn grid_worked_example_matches_oracle() {
    let mut pts = Vec::new();
    for y in 0..3 {
        for x in 0..3 {
            pts.push(Point3::new(x as f64, y as f64, 0.0));
        }
    }
    let cloud = PointCloud { points: pts, frame: CloudFrame::Base };
    let got = characteristic_points(&cloud).unwrap();
    assert_eq!(got.points[4], Point3::new(1.0, 1.0, 0.0));
    let (want, _) = oracle_characteristic(&cloud.points);
    assert_eq!(got.points, want);
}

#[test]
fn translation_equivariance_exact_on_dyadic_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..50 {
        let cloud = random_cloud(&mut rng, 60, true);
        let t = nalgebra::Vector3::new(
            rng.gen_range(-64i32..=64) as f64 / 16.0,
            rng.gen_range(-64i32..=64) as f64 / 16.0,
            rng.gen_range(-64i32..=64) as f64 / 16.0,
        );
        let moved = PointCloud {
            points: cloud.points.iter().map(|p| p + t).collect(),
            frame: CloudFrame::Base,
        };
        let a = characteristic_points(&cloud).unwrap();
        let b = characteristic_points(&moved).unwrap();
        for (pa, pb) in a.points.iter().zip(b.points.iter()) {
            assert_eq!(pa + t, *pb);
        }
    }
}

#[test]
fn rank_regions_matches_two_stage_oracle_under_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for case in 0..100 {
        // Disjoint square regions with random sizes/positions on a grid; the
        // spacing keeps overlaps at zero, isolating the two-stage sort.
        let count = rng.gen_range(1..8);
        let mut regions = Vec::new();
        for id in 0..count {
            let w = rng.gen_range(1..12);
            let h = rng.gen_range(1..12);
            let u0 = 40 * id;
            let v0 = rng.gen_range(0u32..30);
            let mut px = Vec::new();
            for v in v0..v0 + h {
                for u in u0..u0 + w {
                    px.push((u, v));
                }
            }
            regions.push(Region::new(id, px));
        }
        let center = (rng.gen_range(0.0..120.0), rng.gen_range(0.0..30.0));

        // Oracle: sort by (area desc, id), re-sort first three by (distance,
        // id), take the head.
        let mut sorted: Vec<&Region> = regions.iter().collect();
        sorted.sort_by(|a, b| b.area().cmp(&a.area()).then(a.id.cmp(&b.id)));
        let top = sorted.len().min(3);
        let dist = |r: &Region| {
            let (cu, cv) = r.centroid();
            ((cu - center.0).powi(2) + (cv - center.1).powi(2)).sqrt()
        };
        sorted[..top].sort_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.id.cmp(&b.id)));
        let want = sorted[0].id;

        let mut shuffled = regions.clone();
        shuffled.shuffle(&mut rng);
        let got = rank_regions(&shuffled, center).unwrap().id;
        assert_eq!(got, want, "case {case}");
    }
}

#[test]
fn back_project_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let intr = CameraIntrinsics {
        fx: 615.3,
        fy: 612.8,
        cx: 323.1,
        cy: 241.7,
        width: 640,
        height: 480,
    };
    let mut data = vec![0.0f64; 640 * 480];
    for d in &mut data {
        *d = if rng.gen_bool(0.1) { -1.0 } else { rng.gen_range(0.3..2.0) };
    }
    let depth = DepthMap::new(640, 480, data.clone());
    let pixels: Vec<(u32, u32)> =
        (0..500).map(|_| (rng.gen_range(0..640), rng.gen_range(0..480))).collect();
    let region = Region::new(0, pixels.clone());
    let cloud = back_project(&region, &depth, &intr).unwrap();

    let mut want = Vec::new();
    for (u, v) in pixels {
        let z = data[(v * 640 + u) as usize];
        if z > 0.0 {
            want.push(Point3::new(
                (u as f64 - intr.cx) * z / intr.fx,
                (v as f64 - intr.cy) * z / intr.fy,
                z,
            ));
        }
    }
    assert_eq!(cloud.points, want);
}
