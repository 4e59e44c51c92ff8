//! Actor-aware tracking rewards: trust the planned reaction while the real
//! actor behaves as predicted, fall back to a safe default otherwise.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::motion::clip::{wrap_angle, GlobalPose};
use crate::motion::features::ActorFrame;
use crate::motion::skeleton::JOINT_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub k_p: f64,
    pub default_scale: f64,
    pub default_sharpness: f64,
    /// Separation in meters at which the root reward saturates.
    pub root_saturation: f64,
    /// 22, or 24 to pad two zero joints.
    pub similarity_joints: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { k_p: 100.0, default_scale: 0.5, default_sharpness: 100.0, root_saturation: 0.4, similarity_joints: 22 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p > 0.0) || !(self.root_saturation > 0.0) || !(self.default_sharpness > 0.0) {
            return Err(invalid("k_p, default sharpness and root saturation must be positive"));
        }
        if !(self.default_scale >= 0.0) {
            return Err(invalid("default reward scale must be non-negative"));
        }
        if self.similarity_joints != 22 && self.similarity_joints != 24 {
            return Err(invalid("similarity joint count must be 22 or 24"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub w: f64,
    pub r_imitation: f64,
    pub r_default: f64,
    pub r_root: f64,
    pub r_total: f64,
}

fn root_relative(frame: &ActorFrame, joints: usize) -> Vec<f64> {
    let root = frame.rel_joint_pos[0];
    let mut v: Vec<f64> = frame
        .rel_joint_pos
        .iter()
        .flat_map(|p| [p[0] - root[0], p[1] - root[1], p[2] - root[2]])
        .collect();
    v.resize(joints * 3, 0.0);
    v
}

/// `0.5 * (1 - mean_t cos(y_hat_t, y_real_t))` over root-relative joint
/// positions, both windows expressed in the same frame.
pub fn deviation_weight(y_hat: &[ActorFrame], y_real: &[ActorFrame], config: &RewardConfig) -> Result<f64> {
    if y_hat.is_empty() || y_hat.len() != y_real.len() {
        return Err(invalid(format!("window lengths {} and {} must match and be positive", y_hat.len(), y_real.len())));
    }
    let mut total = 0.0;
    for (t, (a, b)) in y_hat.iter().zip(y_real).enumerate() {
        let va = root_relative(a, config.similarity_joints);
        let vb = root_relative(b, config.similarity_joints);
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Degenerate(format!("frame {t} has a zero-length joint vector")));
        }
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        total += (dot / (na * nb)).clamp(-1.0, 1.0);
    }
    Ok((0.5 * (1.0 - total / y_hat.len() as f64)).clamp(0.0, 1.0))
}

pub fn reward_default(pose: &GlobalPose, rest_pose: &GlobalPose, config: &RewardConfig) -> f64 {
    config.default_scale * (-config.default_sharpness * pose.mean_joint_distance(rest_pose)).exp()
}

/// Rises linearly with root separation and saturates at 1 from
/// `root_saturation` on. (Reading the cap as `max(d, 0.4)` would make the
/// reward grow without bound, so it is not used.)
pub fn reward_root(root_pos: &Vector3<f64>, actor_root: &Vector3<f64>, config: &RewardConfig) -> f64 {
    reward_root_distance((root_pos - actor_root).norm(), config)
}

pub fn reward_root_distance(distance: f64, config: &RewardConfig) -> f64 {
    distance.max(0.0).min(config.root_saturation) / config.root_saturation
}

pub fn reward_imitation(pose: &GlobalPose, goal: &GlobalPose, config: &RewardConfig) -> f64 {
    let mse = pose.joints.iter().zip(goal.joints.iter()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>()
        / JOINT_COUNT as f64;
    (-config.k_p * mse).exp()
}

pub fn interpolate(w: f64, r_imitation: f64, r_default: f64, r_root: f64) -> RewardBreakdown {
    RewardBreakdown { w, r_imitation, r_default, r_root, r_total: (1.0 - w) * r_imitation + w * (r_default + r_root) }
}

pub struct RewardInputs<'a> {
    pub pose: &'a GlobalPose,
    pub goal: &'a GlobalPose,
    pub rest_pose: &'a GlobalPose,
    pub actor_root: &'a Vector3<f64>,
    pub y_hat: &'a [ActorFrame],
    pub y_real: &'a [ActorFrame],
}

pub fn combined_reward(inputs: &RewardInputs<'_>, config: &RewardConfig) -> Result<RewardBreakdown> {
    config.validate()?;
    let w = deviation_weight(inputs.y_hat, inputs.y_real, config)?;
    Ok(interpolate(
        w,
        reward_imitation(inputs.pose, inputs.goal, config),
        reward_default(inputs.pose, inputs.rest_pose, config),
        reward_root(&inputs.pose.root(), inputs.actor_root, config),
    ))
}

/// Keeps the tracked root away from the actor while the actor deviates
/// from the prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyGuard {
    pub actor_root: Vector3<f64>,
    pub w: f64,
    pub w_threshold: f64,
    /// Minimum root reward to maintain once `w > w_threshold`.
    pub floor: f64,
}

/// Exponential blend toward `goal`, optionally pushed horizontally away
/// from the actor so the root reward stays at or above the guard's floor.
pub fn kinematic_tracker_step(
    current: &GlobalPose,
    goal: &GlobalPose,
    blend_rate: f64,
    guard: Option<(&SafetyGuard, &RewardConfig)>,
) -> Result<GlobalPose> {
    if !(blend_rate > 0.0 && blend_rate <= 1.0) {
        return Err(invalid(format!("blend rate {blend_rate} outside (0, 1]")));
    }
    let mut joints = current.joints;
    for (j, g) in joints.iter_mut().zip(goal.joints.iter()) {
        *j += (g - *j) * blend_rate;
    }
    let yaw = current.root_yaw + blend_rate * wrap_angle(goal.root_yaw - current.root_yaw);
    let mut next = GlobalPose::new(joints, yaw);
    if let Some((g, cfg)) = guard {
        if g.w > g.w_threshold {
            let min_dist = g.floor.clamp(0.0, 1.0) * cfg.root_saturation;
            let mut away = next.root() - g.actor_root;
            away.y = 0.0;
            let d = away.norm();
            if d < min_dist {
                let dir = if d > 1e-12 { away / d } else { Vector3::x() };
                let shift = dir * (min_dist - d);
                next.joints.iter_mut().for_each(|p| *p += shift);
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::skeleton::Skeleton;

    fn actor(scale: f64, seed: f64) -> ActorFrame {
        let mut f = ActorFrame::default();
        for j in 0..JOINT_COUNT {
            f.rel_joint_pos[j] = [scale * (j as f64 * 0.7 + seed).sin(), scale * (j as f64 * 1.3).cos(), scale * 0.1 * j as f64];
        }
        f
    }

    #[test]
    fn weight_endpoints() {
        let c = RewardConfig::default();
        let a = vec![actor(1.0, 0.0), actor(1.0, 0.4)];
        assert!(deviation_weight(&a, &a, &c).unwrap().abs() < 1e-12);
        let neg: Vec<ActorFrame> = a.iter().map(|f| actor_map(f, -1.0)).collect();
        assert!((deviation_weight(&a, &neg, &c).unwrap() - 1.0).abs() < 1e-12);
        let scaled: Vec<ActorFrame> = a.iter().map(|f| actor_map(f, 3.5)).collect();
        assert!(deviation_weight(&a, &scaled, &c).unwrap().abs() < 1e-12);
        let c24 = RewardConfig { similarity_joints: 24, ..c };
        assert!((deviation_weight(&a, &neg, &c24).unwrap() - 1.0).abs() < 1e-12);
    }

    fn actor_map(f: &ActorFrame, s: f64) -> ActorFrame {
        let mut out = f.clone();
        let root = f.rel_joint_pos[0];
        for (o, p) in out.rel_joint_pos.iter_mut().zip(f.rel_joint_pos.iter()) {
            *o = [root[0] + s * (p[0] - root[0]), root[1] + s * (p[1] - root[1]), root[2] + s * (p[2] - root[2])];
        }
        out
    }

    #[test]
    fn orthogonal_frames_give_half() {
        let mut a = ActorFrame::default();
        let mut b = ActorFrame::default();
        a.rel_joint_pos[1] = [1.0, 0.0, 0.0];
        b.rel_joint_pos[1] = [0.0, 1.0, 0.0];
        assert_eq!(deviation_weight(&[a.clone()], &[b], &RewardConfig::default()).unwrap(), 0.5);
        let zero = ActorFrame::default();
        assert!(matches!(deviation_weight(&[a], &[zero], &RewardConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn component_values() {
        let c = RewardConfig::default();
        let sk = Skeleton::smpl22();
        let rest = GlobalPose::rest(&sk, [0.0, 0.0], 0.0);
        assert_eq!(reward_default(&rest, &rest, &c), 0.5);
        let moved = rest.transformed(0.0, &Vector3::new(0.01, 0.0, 0.0));
        assert!((reward_default(&moved, &rest, &c) - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((reward_default(&moved, &rest, &c) - 0.18393972058572117).abs() < 1e-12);
        assert_eq!(reward_root_distance(0.0, &c), 0.0);
        assert_eq!(reward_root_distance(0.2, &c), 0.5);
        assert_eq!(reward_root_distance(0.4, &c), 1.0);
        assert_eq!(reward_root_distance(1.0, &c), 1.0);
        assert_eq!(reward_imitation(&rest, &rest, &c), 1.0);
        let off = rest.transformed(0.0, &Vector3::new(0.1, 0.0, 0.0));
        assert!((reward_imitation(&off, &rest, &c) - 0.36787944117144233).abs() < 1e-12);
    }

    #[test]
    fn interpolation_endpoints() {
        let b = interpolate(0.0, 0.8, 0.5, 1.0);
        assert_eq!(b.r_total, 0.8);
        let b = interpolate(1.0, 0.8, 0.5, 1.0);
        assert_eq!(b.r_total, 1.5);
        assert!((interpolate(0.5, 0.8, 0.5, 1.0).r_total - 1.15).abs() < 1e-15);
    }

    #[test]
    fn tracker_steps() {
        let sk = Skeleton::smpl22();
        let cur = GlobalPose::rest(&sk, [0.0, 0.0], 0.0);
        let goal = GlobalPose::rest(&sk, [1.0, 0.0], 0.5);
        let full = kinematic_tracker_step(&cur, &goal, 1.0, None).unwrap();
        for (a, b) in full.joints.iter().zip(goal.joints.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(kinematic_tracker_step(&goal, &goal, 0.3, None).unwrap(), goal);
        let mut p = cur.clone();
        let mut err = p.mean_joint_distance(&goal);
        for _ in 0..5 {
            p = kinematic_tracker_step(&p, &goal, 0.5, None).unwrap();
            let e = p.mean_joint_distance(&goal);
            assert!((e - err / 2.0).abs() < 1e-12);
            err = e;
        }
        assert!(kinematic_tracker_step(&cur, &goal, 0.0, None).is_err());
    }

    #[test]
    fn guard_keeps_distance() {
        let sk = Skeleton::smpl22();
        let c = RewardConfig::default();
        let cur = GlobalPose::rest(&sk, [0.0, 0.0], 0.0);
        let guard = SafetyGuard { actor_root: Vector3::new(0.05, 0.9, 0.0), w: 0.8, w_threshold: 0.5, floor: 0.75 };
        let next = kinematic_tracker_step(&cur, &cur, 1.0, Some((&guard, &c))).unwrap();
        let r = reward_root(&next.root(), &Vector3::new(0.05, next.root().y, 0.0), &c);
        assert!(r >= 0.75 - 1e-12);
        let calm = SafetyGuard { w: 0.1, ..guard };
        assert_eq!(kinematic_tracker_step(&cur, &cur, 1.0, Some((&calm, &c))).unwrap(), cur);
    }
}
