//! Bag perception math: segmentation-region ranking, pinhole depth
//! back-projection and the five characteristic points that summarize a bag
//! cloud for the policy observation. Segmentation itself is an input
//! boundary; regions and depth arrive from files or the synthetic generator.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("region pixel ({0}, {1}) outside the depth map")]
    PixelOutOfBounds(u32, u32),
    #[error("no valid depth values in the region")]
    EmptyCloud,
}

/// One segmentation region: a pixel set with cached area and centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: u32,
    pixels: Vec<(u32, u32)>,
    centroid: (f64, f64),
}

impl Region {
    pub fn new(id: u32, pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "region must contain pixels");
        let n = pixels.len() as f64;
        let (su, sv) = pixels
            .iter()
            .fold((0.0, 0.0), |(su, sv), (u, v)| (su + *u as f64, sv + *v as f64));
        Self { id, pixels, centroid: (su / n, sv / n) }
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }

    fn overlap_with(&self, other: &Region) -> usize {
        let set: std::collections::HashSet<_> = other.pixels.iter().collect();
        self.pixels.iter().filter(|p| set.contains(p)).count()
    }
}

/// Pick the grasp-candidate region: drop regions mostly covered by another
/// one (intersection above 80% of their own area), order the rest by area
/// descending, re-order the top three by centroid distance to the image
/// center, and return the first. Ties resolve by region id, which makes the
/// result independent of input order.
pub fn rank_regions<'a>(regions: &'a [Region], image_center: (f64, f64)) -> Option<&'a Region> {
    let mut survivors: Vec<&Region> = regions
        .iter()
        .filter(|r| {
            regions
                .iter()
                .filter(|o| o.id != r.id)
                .all(|o| (r.overlap_with(o) as f64) <= 0.8 * r.area() as f64)
        })
        .collect();
    survivors.sort_by(|a, b| b.area().cmp(&a.area()).then(a.id.cmp(&b.id)));
    let top = survivors.len().min(3);
    let dist = |r: &Region| {
        let (cu, cv) = r.centroid();
        ((cu - image_center.0).powi(2) + (cv - image_center.1).powi(2)).sqrt()
    };
    survivors[..top].sort_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.id.cmp(&b.id)));
    survivors.first().copied()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
    }
}

/// Row-major per-pixel depth in meters; non-positive or non-finite values
/// mean "no return" and are skipped.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (width * height) as usize);
        Self { width, height, data }
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        Some(self.data[(v * self.width + u) as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFrame {
    Camera,
    Base,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub frame: CloudFrame,
}

/// Pinhole back-projection of a region through its depth values:
/// x = (u - cx) z / fx, y = (v - cy) z / fy.
pub fn back_project(
    region: &Region,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<PointCloud, PerceptionError> {
    let mut points = Vec::with_capacity(region.area());
    for (u, v) in region.pixels() {
        let z = depth.get(*u, *v).ok_or(PerceptionError::PixelOutOfBounds(*u, *v))?;
        if !z.is_finite() || z <= 0.0 {
            continue;
        }
        let x = (*u as f64 - intr.cx) * z / intr.fx;
        let y = (*v as f64 - intr.cy) * z / intr.fy;
        points.push(Point3::new(x, y, z));
    }
    if points.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    Ok(PointCloud { points, frame: CloudFrame::Camera })
}

/// The five bag keypoints plus the center estimate they derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicPoints {
    pub points: [Point3<f64>; 5],
    pub center_xy: (f64, f64),
}

impl CharacteristicPoints {
    /// The 15-value observation block, point-major.
    pub fn flat(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        for (i, p) in self.points.iter().enumerate() {
            out[3 * i] = p.x;
            out[3 * i + 1] = p.y;
            out[3 * i + 2] = p.z;
        }
        out
    }
}

/// Stable sort of point indices by one coordinate; equal keys keep their
/// relative order, which pins the outcome on degenerate clouds.
fn stable_sort_by_coord(order: &mut Vec<usize>, points: &[Point3<f64>], coord: usize) {
    order.sort_by(|a, b| points[*a][coord].total_cmp(&points[*b][coord]));
}

/// Extremal points after the two double sorts, the derived center, and the
/// cloud point nearest that center in the x/y plane (smallest index on
/// ties).
pub fn characteristic_points(cloud: &PointCloud) -> Result<CharacteristicPoints, PerceptionError> {
    let pts = &cloud.points;
    if pts.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    let mut order: Vec<usize> = (0..pts.len()).collect();
    stable_sort_by_coord(&mut order, pts, 1);
    stable_sort_by_coord(&mut order, pts, 0);
    let a0 = pts[order[0]];
    let a1 = pts[*order.last().unwrap()];

    let mut order: Vec<usize> = (0..pts.len()).collect();
    stable_sort_by_coord(&mut order, pts, 0);
    stable_sort_by_coord(&mut order, pts, 1);
    let a2 = pts[order[0]];
    let a3 = pts[*order.last().unwrap()];

    let x0 = 0.5 * (a2.x + a3.x);
    let y0 = 0.5 * (a0.y + a1.y);

    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        let d = (p.x - x0).powi(2) + (p.y - y0).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let a4 = pts[best];

    Ok(CharacteristicPoints { points: [a0, a1, a2, a3, a4], center_xy: (x0, y0) })
}

/// Parameters of the synthetic bag-surface sampler.
#[derive(Debug, Clone, Copy)]
pub struct SynthBagParams {
    /// Footprint of the bag as it lies (meters).
    pub footprint: [f64; 2],
    /// Height of the top surface above the supporting floor.
    pub thickness: f64,
    /// Center droop toward the edges: the surface falls off quadratically by
    /// this much at the footprint boundary.
    pub sag: f64,
    /// Gaussian position noise applied to every sample.
    pub noise_sigma: f64,
    /// Samples per axis.
    pub samples: [u32; 2],
}

impl Default for SynthBagParams {
    fn default() -> Self {
        Self {
            footprint: [0.29, 0.18],
            thickness: 0.06,
            sag: 0.015,
            noise_sigma: 0.0,
            samples: [31, 21],
        }
    }
}

/// Deterministic top-surface samples of a rounded-box bag proxy lying at
/// `(x, y)` on a floor at `floor_z`, rotated by `yaw`. Points come out in
/// the base frame.
pub fn synth_bag_cloud(
    center_xy: (f64, f64),
    floor_z: f64,
    yaw: f64,
    params: &SynthBagParams,
    seed: u64,
) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, params.noise_sigma.max(0.0)).expect("sigma >= 0");
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let [nx, ny] = params.samples;
    let mut points = Vec::with_capacity((nx * ny) as usize);
    for i in 0..nx {
        for j in 0..ny {
            let fx = if nx > 1 { i as f64 / (nx - 1) as f64 - 0.5 } else { 0.0 };
            let fy = if ny > 1 { j as f64 / (ny - 1) as f64 - 0.5 } else { 0.0 };
            let lx = fx * params.footprint[0];
            let ly = fy * params.footprint[1];
            // Pillow profile: highest at the center, sagging at the rim.
            let r2 = (2.0 * fx).powi(2) + (2.0 * fy).powi(2);
            let lz = params.thickness - params.sag * (r2 / 2.0).min(1.0);
            let local = rot * Vector3::new(lx, ly, lz);
            let mut p = Point3::new(
                local.x + center_xy.0,
                local.y + center_xy.1,
                local.z + floor_z,
            );
            if params.noise_sigma > 0.0 {
                p.x += normal.sample(&mut rng);
                p.y += normal.sample(&mut rng);
                p.z += normal.sample(&mut rng);
            }
            points.push(p);
        }
    }
    PointCloud { points, frame: CloudFrame::Base }
}
