//! Primitive solids and segment distance queries.
//!
//! Links are capsules, so every check reduces to "segment within threshold of
//! a solid". Capsule obstacles use the exact segment-segment distance; boxes
//! and cylinders minimize the (convex) point-solid distance along the segment
//! with a Lipschitz quick reject and a bounded ternary search.

use nalgebra::{Isometry3, Point3, Vector3};

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Oriented box given by center pose and half extents.
    Box { pose: Isometry3<f64>, half: Vector3<f64> },
    /// Cylinder along its local z axis.
    Cylinder { pose: Isometry3<f64>, radius: f64, half_height: f64 },
    /// Capsule along its local z axis.
    Capsule { pose: Isometry3<f64>, radius: f64, half_length: f64 },
}

impl Primitive {
    pub fn axis_aligned_box(center: Point3<f64>, half: Vector3<f64>) -> Self {
        Primitive::Box { pose: Isometry3::translation(center.x, center.y, center.z), half }
    }

    /// True when a capsule with the given world segment and combined radius
    /// (link radius + margin) intersects this solid.
    pub fn intersects_capsule(&self, a: &Point3<f64>, b: &Point3<f64>, radius: f64) -> bool {
        match self {
            Primitive::Capsule { pose, radius: r, half_length } => {
                let p = pose * Point3::new(0.0, 0.0, -half_length);
                let q = pose * Point3::new(0.0, 0.0, *half_length);
                segment_segment_distance(a, b, &p, &q) <= r + radius
            }
            Primitive::Box { pose, half } => {
                let inv = pose.inverse();
                let la = inv * a;
                let lb = inv * b;
                segment_solid_within(&la, &lb, radius, |p| point_box_distance(p, half))
            }
            Primitive::Cylinder { pose, radius: r, half_height } => {
                let inv = pose.inverse();
                let la = inv * a;
                let lb = inv * b;
                segment_solid_within(&la, &lb, radius, |p| {
                    point_cylinder_distance(p, *r, *half_height)
                })
            }
        }
    }

    /// Distance from the solid to a world segment, zero when intersecting.
    /// Boxes and cylinders are resolved to roughly micrometer accuracy.
    pub fn distance_to_segment(&self, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
        match self {
            Primitive::Capsule { pose, radius, half_length } => {
                let p = pose * Point3::new(0.0, 0.0, -half_length);
                let q = pose * Point3::new(0.0, 0.0, *half_length);
                (segment_segment_distance(a, b, &p, &q) - radius).max(0.0)
            }
            Primitive::Box { pose, half } => {
                let inv = pose.inverse();
                minimize_along_segment(&(inv * a), &(inv * b), |p| point_box_distance(p, half))
            }
            Primitive::Cylinder { pose, radius, half_height } => {
                let inv = pose.inverse();
                minimize_along_segment(&(inv * a), &(inv * b), |p| {
                    point_cylinder_distance(p, *radius, *half_height)
                })
            }
        }
    }
}

/// Distance from a point to a centered axis-aligned box; zero inside.
pub fn point_box_distance(p: &Point3<f64>, half: &Vector3<f64>) -> f64 {
    let dx = (p.x.abs() - half.x).max(0.0);
    let dy = (p.y.abs() - half.y).max(0.0);
    let dz = (p.z.abs() - half.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Distance from a point to a z-aligned centered cylinder; zero inside.
pub fn point_cylinder_distance(p: &Point3<f64>, radius: f64, half_height: f64) -> f64 {
    let dr = (p.x.hypot(p.y) - radius).max(0.0);
    let dz = (p.z.abs() - half_height).max(0.0);
    dr.hypot(dz)
}

/// Exact closest distance between segments [p1,q1] and [p2,q2].
pub fn segment_segment_distance(
    p1: &Point3<f64>,
    q1: &Point3<f64>,
    p2: &Point3<f64>,
    q2: &Point3<f64>,
) -> f64 {
    const EPS: f64 = 1e-12;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom.abs() > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Does the convex point-solid distance dip to `threshold` anywhere along the
/// local segment? `dist` must be convex along affine paths, which holds for
/// any distance-to-convex-solid function.
fn segment_solid_within<F: Fn(&Point3<f64>) -> f64>(
    a: &Point3<f64>,
    b: &Point3<f64>,
    threshold: f64,
    dist: F,
) -> bool {
    let len = (b - a).norm();
    let eval = |t: f64| dist(&Point3::from(a.coords + (b.coords - a.coords) * t));

    let fm = eval(0.5);
    if fm <= threshold {
        return true;
    }
    // 1-Lipschitz in arc length: the minimum cannot undercut this bound.
    if fm - 0.5 * len > threshold {
        return false;
    }
    if eval(0.0) <= threshold || eval(1.0) <= threshold {
        return true;
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..48 {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        let f1 = eval(m1);
        if f1 <= threshold {
            return true;
        }
        let f2 = eval(m2);
        if f2 <= threshold {
            return true;
        }
        if f1.min(f2) - (hi - lo) * len > threshold {
            return false;
        }
        if f1 <= f2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    false
}

fn minimize_along_segment<F: Fn(&Point3<f64>) -> f64>(
    a: &Point3<f64>,
    b: &Point3<f64>,
    dist: F,
) -> f64 {
    let eval = |t: f64| dist(&Point3::from(a.coords + (b.coords - a.coords) * t));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..64 {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        if eval(m1) <= eval(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    eval(0.5 * (lo + hi)).min(eval(0.0)).min(eval(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_parallel_and_crossing() {
        let d = segment_segment_distance(
            &Point3::new(0.0, 0.0, 0.0),
            &Point3::new(1.0, 0.0, 0.0),
            &Point3::new(0.0, 0.0, 1.0),
            &Point3::new(1.0, 0.0, 1.0),
        );
        assert!((d - 1.0).abs() < 1e-12);

        let d = segment_segment_distance(
            &Point3::new(-1.0, 0.0, 0.0),
            &Point3::new(1.0, 0.0, 0.0),
            &Point3::new(0.0, -1.0, 0.5),
            &Point3::new(0.0, 1.0, 0.5),
        );
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_distance_inside_and_outside() {
        let half = Vector3::new(1.0, 1.0, 1.0);
        assert_eq!(point_box_distance(&Point3::new(0.5, 0.0, 0.0), &half), 0.0);
        let d = point_box_distance(&Point3::new(2.0, 2.0, 0.0), &half);
        assert!((d - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn capsule_box_threshold_test() {
        let shape = Primitive::axis_aligned_box(Point3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0));
        // Segment passing 0.3 above the top face.
        let a = Point3::new(-2.0, 0.0, 1.3);
        let b = Point3::new(2.0, 0.0, 1.3);
        assert!(shape.intersects_capsule(&a, &b, 0.31));
        assert!(!shape.intersects_capsule(&a, &b, 0.29));
        let d = shape.distance_to_segment(&a, &b);
        assert!((d - 0.3).abs() < 1e-6);
    }

    #[test]
    fn cylinder_segment_distance() {
        let shape = Primitive::Cylinder {
            pose: Isometry3::identity(),
            radius: 0.5,
            half_height: 1.0,
        };
        let a = Point3::new(1.5, 0.0, -0.5);
        let b = Point3::new(1.5, 0.0, 0.5);
        let d = shape.distance_to_segment(&a, &b);
        assert!((d - 1.0).abs() < 1e-6);
        assert!(shape.intersects_capsule(&a, &b, 1.01));
        assert!(!shape.intersects_capsule(&a, &b, 0.99));
    }
}
