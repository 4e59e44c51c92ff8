//! Seeded two-agent clips whose reactor is a closed-form function of the actor.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InteractionRecord;
use crate::error::{invalid, Result};
use crate::motion::clip::{rotate_y, wrap_angle, AgentId, GlobalPose, MotionClip, DEFAULT_FPS};
use crate::motion::features::{HISTORY_LEN, WINDOW_LEN};
use crate::motion::skeleton::{joint, Skeleton, JOINT_COUNT, REST_PELVIS_HEIGHT};

pub const MIRROR_DELAY: usize = 3;
pub const FOLLOW_DISTANCE: f64 = 1.0;
pub const CLASP_FRAMES: usize = 60;

const SWING_HZ: f64 = 0.5;
const SWING_AMP: f64 = 0.2;
const KNEE_AMP: f64 = 0.3;
const ARM_DROP: f64 = 1.2;
const MEAN_SPEED: f64 = 0.2;
const SPEED_PERIOD: f64 = 6.0;
const TURN_RATE: f64 = 0.25;
const TURN_PERIOD: f64 = 8.0;
const APPROACH_DISTANCE: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Mirror,
    Follow,
    Handshake,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Mirror, Scenario::Follow, Scenario::Handshake];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Mirror => "mirror the partner",
            Scenario::Follow => "follow the partner",
            Scenario::Handshake => "shake hands with the partner",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Mirror => "mirror",
            Scenario::Follow => "follow",
            Scenario::Handshake => "handshake",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| invalid(format!("unknown scenario {s:?} (expected mirror, follow or handshake)")))
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Joint-local rotations for one frame of the procedural body.
#[derive(Debug, Clone, Copy, Default)]
struct Limbs {
    phase: f64,
    /// 0 keeps the right arm lowered, 1 extends it straight ahead.
    reach: f64,
}

fn forward_kinematics(sk: &Skeleton, root: Vector3<f64>, yaw: f64, limbs: Limbs) -> GlobalPose {
    let s = limbs.phase.sin();
    let mut local = [Matrix3::identity(); JOINT_COUNT];
    local[joint::LEFT_HIP] = rot_x(-SWING_AMP * s);
    local[joint::RIGHT_HIP] = rot_x(SWING_AMP * s);
    local[joint::LEFT_KNEE] = rot_x(KNEE_AMP * s.max(0.0));
    local[joint::RIGHT_KNEE] = rot_x(KNEE_AMP * (-s).max(0.0));
    local[joint::LEFT_SHOULDER] = rot_x(-SWING_AMP * s) * rot_z(-ARM_DROP);
    let right_swing = rot_x(-SWING_AMP * s * (1.0 - limbs.reach)) * rot_z(ARM_DROP * (1.0 - limbs.reach));
    local[joint::RIGHT_SHOULDER] = rot_y(PI / 2.0 * limbs.reach) * right_swing;

    let mut global = [Matrix3::identity(); JOINT_COUNT];
    let mut joints = [Vector3::zeros(); JOINT_COUNT];
    global[0] = rot_y(yaw);
    joints[0] = root;
    for j in 1..JOINT_COUNT {
        let p = sk.parent(j).expect("non-root joint");
        joints[j] = joints[p] + global[p] * sk.rest_offset(j);
        global[j] = global[p] * local[j];
    }
    GlobalPose::new(joints, yaw)
}

struct Walk {
    xz: [f64; 2],
    yaw: f64,
    speed_phase: f64,
    turn_phase: f64,
    limb_phase: f64,
}

fn wandering_actor(sk: &Skeleton, frames: usize, rng: &mut ChaCha8Rng) -> Vec<GlobalPose> {
    let dt = 1.0 / DEFAULT_FPS;
    let mut w = Walk {
        xz: [rng.random_range(0.6..1.4), rng.random_range(-0.5..0.5)],
        yaw: rng.random_range(-PI..PI),
        speed_phase: rng.random_range(0.0..2.0 * PI),
        turn_phase: rng.random_range(0.0..2.0 * PI),
        limb_phase: rng.random_range(0.0..2.0 * PI),
    };
    let mut out = Vec::with_capacity(frames);
    for n in 0..frames {
        let t = n as f64 * dt;
        let limbs = Limbs { phase: w.limb_phase + 2.0 * PI * SWING_HZ * t, reach: 0.0 };
        let root = Vector3::new(w.xz[0], REST_PELVIS_HEIGHT, w.xz[1]);
        out.push(forward_kinematics(sk, root, wrap_angle(w.yaw), limbs));
        let speed = MEAN_SPEED * (1.0 + 0.6 * (w.speed_phase + 2.0 * PI * t / SPEED_PERIOD).sin());
        w.yaw += TURN_RATE * (w.turn_phase + 2.0 * PI * t / TURN_PERIOD).sin() * dt;
        w.xz[0] += speed * w.yaw.sin() * dt;
        w.xz[1] += speed * w.yaw.cos() * dt;
    }
    out
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Actor approaches a standing spot, holds the right hand out for the clasp,
/// lowers it and idles. Returns the poses and the clasp point.
fn approaching_actor(sk: &Skeleton, frames: usize, rng: &mut ChaCha8Rng) -> (Vec<GlobalPose>, Vector3<f64>) {
    let yaw = rng.random_range(-PI..PI);
    let stand = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let limb_phase = rng.random_range(0.0..2.0 * PI);
    let heading = rotate_y(&Vector3::z(), yaw);
    let clasp_start = frames * 2 / 5;
    let approach = clasp_start.saturating_sub(15).max(1);
    let ramp = 12usize;
    let clasp_end = clasp_start + CLASP_FRAMES;

    let mut out = Vec::with_capacity(frames);
    for n in 0..frames {
        let progress = smoothstep(n as f64 / approach as f64);
        let back = APPROACH_DISTANCE * (1.0 - progress);
        let root = Vector3::new(stand[0], REST_PELVIS_HEIGHT, stand[1]) - heading * back;
        let reach = if n + ramp < clasp_start {
            0.0
        } else if n < clasp_start {
            smoothstep(1.0 - (clasp_start - n) as f64 / ramp as f64)
        } else if n < clasp_end {
            1.0
        } else {
            smoothstep(1.0 - (n - clasp_end) as f64 / ramp as f64)
        };
        // limbs slow to rest as the walk ends
        let t = n as f64 / DEFAULT_FPS;
        let gait = 1.0 - progress;
        let phase = limb_phase + 2.0 * PI * SWING_HZ * t;
        let limbs = Limbs { phase: (phase.sin() * gait).asin(), reach };
        out.push(forward_kinematics(sk, root, yaw, limbs));
    }
    let clasp = forward_kinematics(
        sk,
        Vector3::new(stand[0], REST_PELVIS_HEIGHT, stand[1]),
        yaw,
        Limbs { phase: 0.0, reach: 1.0 },
    );
    (out, clasp.joints[joint::RIGHT_WRIST])
}

/// Reflection across the X = 0 plane with left/right joints swapped.
pub fn mirror_pose(pose: &GlobalPose) -> GlobalPose {
    let mut joints = [Vector3::zeros(); JOINT_COUNT];
    for (j, p) in pose.joints.iter().enumerate() {
        joints[Skeleton::mirror_joint(j)] = Vector3::new(-p.x, p.y, p.z);
    }
    GlobalPose::new(joints, -pose.root_yaw)
}

/// Copy placed `distance` behind the pose along its own heading.
pub fn trailing_pose(pose: &GlobalPose, distance: f64) -> GlobalPose {
    let back = rotate_y(&Vector3::z(), pose.root_yaw) * distance;
    let mut joints = pose.joints;
    joints.iter_mut().for_each(|p| *p -= back);
    GlobalPose::new(joints, pose.root_yaw)
}

/// Half-turn about the vertical axis through `pivot`.
pub fn facing_pose(pose: &GlobalPose, pivot: &Vector3<f64>) -> GlobalPose {
    let mut joints = pose.joints;
    for p in joints.iter_mut() {
        *p = Vector3::new(2.0 * pivot.x - p.x, p.y, 2.0 * pivot.z - p.z);
    }
    GlobalPose::new(joints, pose.root_yaw + PI)
}

/// Minimum length accepted by [`synth_generate`].
pub fn min_duration(scenario: Scenario) -> usize {
    match scenario {
        Scenario::Handshake => (HISTORY_LEN + WINDOW_LEN).max(CLASP_FRAMES * 3),
        _ => HISTORY_LEN + WINDOW_LEN,
    }
}

pub fn synth_generate(scenario: Scenario, duration_frames: usize, seed: u64) -> Result<InteractionRecord> {
    let need = min_duration(scenario);
    if duration_frames < need {
        return Err(invalid(format!(
            "{scenario} clips need at least {need} frames, got {duration_frames}"
        )));
    }
    let sk = Skeleton::smpl22();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (actor, reactor): (Vec<GlobalPose>, Vec<GlobalPose>) = match scenario {
        Scenario::Mirror => {
            let actor = wandering_actor(&sk, duration_frames, &mut rng);
            let reactor = (0..duration_frames)
                .map(|n| mirror_pose(&actor[n.saturating_sub(MIRROR_DELAY)]))
                .collect();
            (actor, reactor)
        }
        Scenario::Follow => {
            let actor = wandering_actor(&sk, duration_frames, &mut rng);
            let reactor = actor.iter().map(|p| trailing_pose(p, FOLLOW_DISTANCE)).collect();
            (actor, reactor)
        }
        Scenario::Handshake => {
            let (actor, pivot) = approaching_actor(&sk, duration_frames, &mut rng);
            let reactor = actor.iter().map(|p| facing_pose(p, &pivot)).collect();
            (actor, reactor)
        }
    };
    Ok(InteractionRecord {
        actor: MotionClip::new(DEFAULT_FPS, AgentId::Actor, actor),
        reactor: MotionClip::new(DEFAULT_FPS, AgentId::Reactor, reactor),
        label: scenario.label().to_string(),
        scenario: Some(scenario),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::features::{compute_interaction_field, detect_default_contacts, FIELD_THRESH};

    #[test]
    fn mirror_rule_is_exact() {
        let r = synth_generate(Scenario::Mirror, 120, 3).unwrap();
        for n in 0..120usize {
            let src = &r.actor.frames[n.saturating_sub(MIRROR_DELAY)];
            for j in 0..JOINT_COUNT {
                let a = src.joints[j];
                let b = r.reactor.frames[n].joints[Skeleton::mirror_joint(j)];
                assert_eq!(b, Vector3::new(-a.x, a.y, a.z));
            }
        }
    }

    #[test]
    fn follow_keeps_distance() {
        let r = synth_generate(Scenario::Follow, 80, 4).unwrap();
        for (a, b) in r.actor.frames.iter().zip(&r.reactor.frames) {
            assert!(((a.root() - b.root()).norm() - FOLLOW_DISTANCE).abs() < 1e-12);
        }
    }

    #[test]
    fn handshake_clasp_sets_field() {
        let sk = Skeleton::smpl22();
        let r = synth_generate(Scenario::Handshake, 240, 5).unwrap();
        let mut clasped = 0;
        for (a, b) in r.actor.frames.iter().zip(&r.reactor.frames) {
            let f = compute_interaction_field(b, a, &sk, FIELD_THRESH);
            if f.values[5][5] == 1.0 {
                clasped += 1;
            }
        }
        assert!(clasped >= 30, "clasp lasted {clasped} frames");
        let start = r.actor.frames[0].root();
        let end = r.actor.frames[120].root();
        assert!((start - end).norm() > 1.0);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = synth_generate(Scenario::Mirror, 90, 7).unwrap();
        let b = synth_generate(Scenario::Mirror, 90, 7).unwrap();
        let c = synth_generate(Scenario::Mirror, 90, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.actor.frames, c.actor.frames);
    }

    #[test]
    fn rejects_short_duration() {
        assert!(synth_generate(Scenario::Follow, HISTORY_LEN + WINDOW_LEN - 1, 1).is_err());
    }

    #[test]
    fn feet_touch_ground_sometimes() {
        let sk = Skeleton::smpl22();
        let r = synth_generate(Scenario::Mirror, 600, 9).unwrap();
        let c = detect_default_contacts(&r.actor, &sk).unwrap();
        let hits: f64 = c.iter().flat_map(|x| x.iter()).sum();
        assert!(hits > 0.0);
        let min_y = r.actor.frames.iter().flat_map(|p| p.joints.iter()).map(|p| p.y).fold(f64::MAX, f64::min);
        assert!(min_y > -1e-9);
    }
}
