//! Interpenetration volume between two joint-sphere bodies on a voxel grid.

use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::motion::clip::{GlobalPose, MotionClip};

use super::physics::JointRadii;

pub const DEFAULT_VOXEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }

    fn overlaps(&self, other: &Sphere) -> bool {
        (self.center - other.center).norm() < self.radius + other.radius
    }
}

pub fn pose_spheres(pose: &GlobalPose, radii: &JointRadii) -> Vec<Sphere> {
    pose.joints
        .iter()
        .enumerate()
        .filter(|(j, _)| radii.get(*j) > 0.0)
        .map(|(j, c)| Sphere { center: *c, radius: radii.get(j) })
        .collect()
}

type Aabb = (Vector3<f64>, Vector3<f64>);

fn sphere_box(s: &Sphere) -> Aabb {
    let r = Vector3::repeat(s.radius);
    (s.center - r, s.center + r)
}

fn intersect(a: &Aabb, b: &Aabb) -> Option<Aabb> {
    let lo = a.0.sup(&b.0);
    let hi = a.1.inf(&b.1);
    (lo.x < hi.x && lo.y < hi.y && lo.z < hi.z).then_some((lo, hi))
}

fn merge(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn column_intervals(spheres: &[&Sphere], x: f64, y: f64) -> Vec<(f64, f64)> {
    merge(
        spheres
            .iter()
            .filter_map(|s| {
                let rest = s.radius * s.radius - (x - s.center.x).powi(2) - (y - s.center.y).powi(2);
                (rest >= 0.0).then(|| {
                    let h = rest.sqrt();
                    (s.center.z - h, s.center.z + h)
                })
            })
            .collect(),
    )
}

/// Volume in cubic meters of the points inside both sphere unions, counting
/// voxel centers of an axis-aligned grid with spacing `voxel` anchored at
/// the origin. Each grid column is resolved by interval intersection, which
/// counts exactly the centers a per-voxel inside test would.
pub fn intersection_volume(a: &[Sphere], b: &[Sphere], voxel: f64) -> Result<f64> {
    if !(voxel > 0.0) {
        return Err(invalid("voxel size must be positive"));
    }
    let mut sa: Vec<&Sphere> = Vec::new();
    let mut sb: Vec<&Sphere> = Vec::new();
    let mut bounds: Option<Aabb> = None;
    for s in a {
        for t in b {
            if s.overlaps(t) {
                if let Some(bx) = intersect(&sphere_box(s), &sphere_box(t)) {
                    bounds = Some(match bounds {
                        None => bx,
                        Some(u) => (u.0.inf(&bx.0), u.1.sup(&bx.1)),
                    });
                }
            }
        }
    }
    let Some((lo, hi)) = bounds else { return Ok(0.0) };
    let bbox = (lo, hi);
    sa.extend(a.iter().filter(|s| intersect(&sphere_box(s), &bbox).is_some()));
    sb.extend(b.iter().filter(|s| intersect(&sphere_box(s), &bbox).is_some()));
    let cell = |v: f64| (v / voxel - 0.5).ceil() as i64;
    let (x0, x1) = (cell(lo.x), (hi.x / voxel - 0.5).floor() as i64);
    let (y0, y1) = (cell(lo.y), (hi.y / voxel - 0.5).floor() as i64);
    let mut count: u64 = 0;
    for ix in x0..=x1 {
        let x = (ix as f64 + 0.5) * voxel;
        for iy in y0..=y1 {
            let y = (iy as f64 + 0.5) * voxel;
            let ia = column_intervals(&sa, x, y);
            if ia.is_empty() {
                continue;
            }
            let ib = column_intervals(&sb, x, y);
            let (mut i, mut j) = (0, 0);
            while i < ia.len() && j < ib.len() {
                let l = ia[i].0.max(ib[j].0);
                let h = ia[i].1.min(ib[j].1);
                if l <= h {
                    let k0 = (l / voxel - 0.5).ceil() as i64;
                    let k1 = (h / voxel - 0.5).floor() as i64;
                    if k1 >= k0 {
                        count += (k1 - k0 + 1) as u64;
                    }
                }
                if ia[i].1 < ib[j].1 {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
    }
    Ok(count as f64 * voxel.powi(3))
}

/// Per-frame volumes in liters.
pub fn interpenetration_per_frame(
    x: &MotionClip,
    y: &MotionClip,
    radii: &JointRadii,
    voxel: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(invalid(format!("clip lengths differ: {} vs {}", x.len(), y.len())));
    }
    radii.validate()?;
    exec.map_range(x.len(), |n| {
        let a = pose_spheres(&x.frames[n], radii);
        let b = pose_spheres(&y.frames[n], radii);
        intersection_volume(&a, &b, voxel).map(|v| v * 1000.0)
    })
    .into_iter()
    .collect()
}

/// Maximum per-frame volume in liters.
pub fn interpenetration_volume(
    x: &MotionClip,
    y: &MotionClip,
    radii: &JointRadii,
    voxel: f64,
    exec: Execution,
) -> Result<f64> {
    Ok(interpenetration_per_frame(x, y, radii, voxel, exec)?.into_iter().fold(0.0, f64::max))
}
