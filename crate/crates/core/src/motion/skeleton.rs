use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const JOINT_COUNT: usize = 22;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

pub mod joint {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
}

const PARENTS: [i32; JOINT_COUNT] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

// Left side is +X when facing +Z.
const REST_OFFSETS: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.0, 0.0],
    [0.06, -0.09, 0.0],
    [-0.06, -0.09, 0.0],
    [0.0, 0.11, 0.0],
    [0.04, -0.38, 0.0],
    [-0.04, -0.38, 0.0],
    [0.0, 0.14, 0.0],
    [0.0, -0.415, -0.04],
    [0.0, -0.415, -0.04],
    [0.0, 0.05, 0.02],
    [0.02, -0.025, 0.12],
    [-0.02, -0.025, 0.12],
    [0.0, 0.21, -0.03],
    [0.07, 0.12, -0.02],
    [-0.07, 0.12, -0.02],
    [0.0, 0.09, 0.05],
    [0.12, 0.04, -0.01],
    [-0.12, 0.04, -0.01],
    [0.25, 0.0, -0.02],
    [-0.25, 0.0, -0.02],
    [0.25, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
];

/// Standing pelvis height for the rest skeleton; puts the foot-end joints
/// 2 cm above the ground plane.
pub const REST_PELVIS_HEIGHT: f64 = 0.93;

/// Kinematic tree plus the joint selections used by contacts, the
/// interaction field and the cross-distance metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub parent_index: Vec<i32>,
    pub rest_offsets: Vec<[f64; 3]>,
    /// left ankle, right ankle, left foot, right foot
    pub foot_joint_ids: [usize; 4],
    /// pelvis, head, left ankle, right ankle, left wrist, right wrist
    pub contact_field_ids: [usize; 6],
    /// pelvis, knees, feet, shoulders, head, wrists
    pub cross_distance_ids: [usize; 10],
}

impl Default for Skeleton {
    fn default() -> Self {
        Self::smpl22()
    }
}

impl Skeleton {
    pub fn smpl22() -> Self {
        use joint::*;
        Self {
            parent_index: PARENTS.to_vec(),
            rest_offsets: REST_OFFSETS.to_vec(),
            foot_joint_ids: [LEFT_ANKLE, RIGHT_ANKLE, LEFT_FOOT, RIGHT_FOOT],
            contact_field_ids: [PELVIS, HEAD, LEFT_ANKLE, RIGHT_ANKLE, LEFT_WRIST, RIGHT_WRIST],
            cross_distance_ids: [
                PELVIS,
                LEFT_KNEE,
                RIGHT_KNEE,
                LEFT_FOOT,
                RIGHT_FOOT,
                LEFT_SHOULDER,
                RIGHT_SHOULDER,
                HEAD,
                LEFT_WRIST,
                RIGHT_WRIST,
            ],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.parent_index.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.parent_index.len() != JOINT_COUNT || self.rest_offsets.len() != JOINT_COUNT {
            return Err(invalid(format!(
                "skeleton must have {JOINT_COUNT} joints, got {}",
                self.parent_index.len()
            )));
        }
        if self.parent_index[0] != -1 {
            return Err(invalid("joint 0 must be the root"));
        }
        for (j, &p) in self.parent_index.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= j {
                return Err(invalid(format!("joint {j} has parent {p}")));
            }
        }
        check_ids("foot_joint_ids", &self.foot_joint_ids)?;
        check_ids("contact_field_ids", &self.contact_field_ids)?;
        check_ids("cross_distance_ids", &self.cross_distance_ids)?;
        Ok(())
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        let p = self.parent_index[j];
        (p >= 0).then_some(p as usize)
    }

    pub fn rest_offset(&self, j: usize) -> Vector3<f64> {
        Vector3::from(self.rest_offsets[j])
    }

    /// Rest pose joint positions with the pelvis at `(0, REST_PELVIS_HEIGHT, 0)`.
    pub fn rest_positions(&self) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::new(0.0, REST_PELVIS_HEIGHT, 0.0); self.joint_count()];
        for j in 1..self.joint_count() {
            let p = self.parent(j).expect("non-root");
            out[j] = out[p] + self.rest_offset(j);
        }
        out
    }

    /// Index of the joint on the opposite body side (identity for midline joints).
    pub fn mirror_joint(j: usize) -> usize {
        const MIRROR: [usize; JOINT_COUNT] = [
            0, 2, 1, 3, 5, 4, 6, 8, 7, 9, 11, 10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20,
        ];
        MIRROR[j]
    }
}

fn check_ids(name: &str, ids: &[usize]) -> Result<()> {
    for (i, &a) in ids.iter().enumerate() {
        if a >= JOINT_COUNT {
            return Err(invalid(format!("{name}: joint {a} out of range")));
        }
        if ids[..i].contains(&a) {
            return Err(invalid(format!("{name}: duplicate joint {a}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_skeleton_is_valid() {
        let s = Skeleton::smpl22();
        s.validate().unwrap();
        assert_eq!(s.joint_count(), 22);
    }

    #[test]
    fn rest_feet_rest_near_ground() {
        let rest = Skeleton::smpl22().rest_positions();
        assert!((rest[joint::LEFT_FOOT].y - 0.02).abs() < 1e-9);
        assert!(rest[joint::LEFT_ANKLE].y < 0.05);
    }

    #[test]
    fn rejects_bad_parent_and_duplicates() {
        let mut s = Skeleton::smpl22();
        s.parent_index[5] = 7;
        assert!(s.validate().is_err());
        let mut s = Skeleton::smpl22();
        s.foot_joint_ids = [7, 7, 10, 11];
        assert!(s.validate().is_err());
    }

    #[test]
    fn mirror_table_is_an_involution() {
        for j in 0..JOINT_COUNT {
            assert_eq!(Skeleton::mirror_joint(Skeleton::mirror_joint(j)), j);
            let a = Skeleton::smpl22().rest_offset(j);
            let b = Skeleton::smpl22().rest_offset(Skeleton::mirror_joint(j));
            assert!((a.x + b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
    }
}
