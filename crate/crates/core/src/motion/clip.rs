use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::skeleton::{Skeleton, JOINT_COUNT};
use crate::error::{invalid, Result};

pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentId {
    Actor,
    Reactor,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AgentId::Actor => "actor",
            AgentId::Reactor => "reactor",
        })
    }
}

impl std::str::FromStr for AgentId {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actor" => Ok(AgentId::Actor),
            "reactor" => Ok(AgentId::Reactor),
            other => Err(invalid(format!("unknown agent id {other:?}"))),
        }
    }
}

/// Global joint positions (Y up, ground at y = 0) plus the root heading.
/// A heading of 0 faces +Z.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPose {
    pub joints: [Vector3<f64>; JOINT_COUNT],
    pub root_yaw: f64,
}

impl GlobalPose {
    pub fn new(joints: [Vector3<f64>; JOINT_COUNT], root_yaw: f64) -> Self {
        Self { joints, root_yaw: wrap_angle(root_yaw) }
    }

    pub fn from_slice(joints: &[Vector3<f64>], root_yaw: f64) -> Result<Self> {
        let joints: [Vector3<f64>; JOINT_COUNT] = joints
            .try_into()
            .map_err(|_| invalid(format!("expected {JOINT_COUNT} joints, got {}", joints.len())))?;
        Ok(Self::new(joints, root_yaw))
    }

    /// Rest pose standing at `root_xz` with heading `yaw`.
    pub fn rest(skeleton: &Skeleton, root_xz: [f64; 2], yaw: f64) -> Self {
        let rest = skeleton.rest_positions();
        let root = Vector3::new(root_xz[0], 0.0, root_xz[1]);
        let pelvis = rest[0];
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for (j, p) in rest.iter().enumerate() {
            let local = p - Vector3::new(pelvis.x, 0.0, pelvis.z);
            joints[j] = rotate_y(&local, yaw) + root;
        }
        Self::new(joints, yaw)
    }

    pub fn root(&self) -> Vector3<f64> {
        self.joints[0]
    }

    pub fn is_finite(&self) -> bool {
        self.root_yaw.is_finite() && self.joints.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// 66 position numbers followed by the yaw.
    pub fn to_row(&self) -> [f64; 67] {
        let mut row = [0.0; 67];
        for (j, p) in self.joints.iter().enumerate() {
            row[3 * j..3 * j + 3].copy_from_slice(p.as_slice());
        }
        row[66] = self.root_yaw;
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 67 {
            return Err(invalid(format!("pose row needs 67 numbers, got {}", row.len())));
        }
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for (j, p) in joints.iter_mut().enumerate() {
            *p = Vector3::new(row[3 * j], row[3 * j + 1], row[3 * j + 2]);
        }
        // Stored yaw is taken verbatim so that files round-trip bit for bit.
        Ok(Self { joints, root_yaw: row[66] })
    }

    /// Mean per-joint Euclidean distance.
    pub fn mean_joint_distance(&self, other: &GlobalPose) -> f64 {
        self.joints
            .iter()
            .zip(other.joints.iter())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / JOINT_COUNT as f64
    }

    /// Applies a yaw about the world Y axis followed by a translation.
    pub fn transformed(&self, yaw: f64, translation: &Vector3<f64>) -> Self {
        let mut joints = self.joints;
        for p in joints.iter_mut() {
            *p = rotate_y(p, yaw) + translation;
        }
        Self::new(joints, self.root_yaw + yaw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub fps: f64,
    pub agent: AgentId,
    pub frames: Vec<GlobalPose>,
}

impl MotionClip {
    pub fn new(fps: f64, agent: AgentId, frames: Vec<GlobalPose>) -> Self {
        Self { fps, agent, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if let Some(i) = self.frames.iter().position(|f| !f.is_finite()) {
            return Err(invalid(format!("frame {i} has non-finite values")));
        }
        Ok(())
    }

    pub fn slice(&self, start: usize, end: usize) -> MotionClip {
        MotionClip::new(self.fps, self.agent, self.frames[start..end].to_vec())
    }

    pub fn transformed(&self, yaw: f64, translation: &Vector3<f64>) -> MotionClip {
        MotionClip::new(
            self.fps,
            self.agent,
            self.frames.iter().map(|f| f.transformed(yaw, translation)).collect(),
        )
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Rotation about +Y by `yaw`; maps +Z to `(sin yaw, 0, cos yaw)`.
pub fn rotate_y(v: &Vector3<f64>, yaw: f64) -> Vector3<f64> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn rotate_y_maps_forward_to_heading() {
        let v = rotate_y(&Vector3::z(), 0.3);
        assert!((v - Vector3::new(0.3f64.sin(), 0.0, 0.3f64.cos())).norm() < 1e-15);
    }

    #[test]
    fn rest_pose_faces_heading() {
        let s = Skeleton::smpl22();
        let p = GlobalPose::rest(&s, [1.0, 2.0], 0.0);
        assert!((p.root() - Vector3::new(1.0, 0.93, 2.0)).norm() < 1e-12);
        // left hip is on the +X side when facing +Z
        assert!(p.joints[1].x > p.joints[2].x);
    }

    #[test]
    fn row_round_trip() {
        let s = Skeleton::smpl22();
        let p = GlobalPose::rest(&s, [0.5, -0.2], 1.0);
        assert_eq!(GlobalPose::from_row(&p.to_row()).unwrap(), p);
    }
}
