//! Ground and contact artifacts with the body surface approximated by
//! spheres around the joints.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::motion::clip::MotionClip;
use crate::motion::features::{detect_foot_contacts, FOOT_HEIGHT_THRESH, FOOT_SPEED_THRESH};
use crate::motion::skeleton::{Skeleton, JOINT_COUNT};

pub const DEFAULT_JOINT_RADIUS: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRadii(pub Vec<f64>);

impl Default for JointRadii {
    fn default() -> Self {
        Self::uniform(DEFAULT_JOINT_RADIUS)
    }
}

impl JointRadii {
    pub fn uniform(r: f64) -> Self {
        Self(vec![r; JOINT_COUNT])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.len() != JOINT_COUNT || self.0.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(invalid(format!("expected {JOINT_COUNT} non-negative joint radii")));
        }
        Ok(())
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

/// Millimeters; skating is per contact frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhysicsMetrics {
    pub penetration: f64,
    pub floating: f64,
    pub skating: f64,
}

fn lowest_surface(clip: &MotionClip, n: usize, radii: &JointRadii) -> f64 {
    clip.frames[n].joints.iter().enumerate().map(|(j, p)| p.y - radii.get(j)).fold(f64::INFINITY, f64::min)
}

/// Penetration averages the depth of the lowest sphere over frames where it
/// dips below the ground. Floating averages its height over airborne frames
/// without any foot contact. Skating averages the horizontal displacement of
/// contact feet over frames with at least one contact.
pub fn physics_metrics(clip: &MotionClip, skeleton: &Skeleton, radii: &JointRadii) -> Result<PhysicsMetrics> {
    if clip.is_empty() {
        return Err(invalid("physics metrics need a non-empty clip"));
    }
    radii.validate()?;
    let contacts = detect_foot_contacts(clip, skeleton, FOOT_HEIGHT_THRESH, FOOT_SPEED_THRESH)?;
    let (mut pen, mut pen_n) = (0.0, 0usize);
    let (mut flo, mut flo_n) = (0.0, 0usize);
    let (mut ska, mut ska_n) = (0.0, 0usize);
    let f = &clip.frames;
    for n in 0..clip.len() {
        let low = lowest_surface(clip, n, radii);
        let in_contact = contacts[n].iter().any(|&c| c > 0.5);
        if low < 0.0 {
            pen += -low;
            pen_n += 1;
        } else if low > 0.0 && !in_contact {
            flo += low;
            flo_n += 1;
        }
        if in_contact && clip.len() > 1 {
            let (a, b) = if n == 0 { (0, 1) } else { (n - 1, n) };
            let mut sum = 0.0;
            let mut feet = 0usize;
            for (k, &j) in skeleton.foot_joint_ids.iter().enumerate() {
                if contacts[n][k] > 0.5 {
                    let d = f[b].joints[j] - f[a].joints[j];
                    sum += (d.x * d.x + d.z * d.z).sqrt();
                    feet += 1;
                }
            }
            ska += sum / feet as f64;
            ska_n += 1;
        }
    }
    let avg = |s: f64, n: usize| if n == 0 { 0.0 } else { 1000.0 * s / n as f64 };
    Ok(PhysicsMetrics { penetration: avg(pen, pen_n), floating: avg(flo, flo_n), skating: avg(ska, ska_n) })
}
