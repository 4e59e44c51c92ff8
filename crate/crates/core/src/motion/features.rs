//! Reactor-centric interaction features.
//!
//! Per frame the interaction vector is `reactor (263) | actor (144) | field (36)`.
//! Reactor features follow the HumanML3D layout; actor features are expressed
//! in the reactor's own heading frame at the same instant so they are purely
//! relative. Velocities are per second, with a backward difference except at
//! the first frame of a clip, which uses a forward difference.

use std::ops::Range;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::clip::{rotate_y, wrap_angle, AgentId, GlobalPose, MotionClip};
use super::rotation::{rot_to_6d, rotation_between};
use super::skeleton::{Skeleton, JOINT_COUNT};
use crate::error::{invalid, Result};

pub const REACTOR_DIM: usize = 263;
pub const ACTOR_DIM: usize = 144;
pub const FIELD_SIDE: usize = 6;
pub const FIELD_DIM: usize = FIELD_SIDE * FIELD_SIDE;
pub const FRAME_DIM: usize = REACTOR_DIM + ACTOR_DIM + FIELD_DIM;

pub const HISTORY_LEN: usize = 20;
pub const WINDOW_LEN: usize = 40;

pub const FOOT_HEIGHT_THRESH: f64 = 0.05;
pub const FOOT_SPEED_THRESH: f64 = 0.15;
pub const FIELD_THRESH: f64 = 0.2;

/// Offsets of each sub-block inside the 443-d frame vector.
pub mod layout {
    use std::ops::Range;

    pub const ROOT_HEIGHT: usize = 0;
    pub const ROOT_VEL: Range<usize> = 1..4;
    pub const LOCAL_POS: Range<usize> = 4..67;
    pub const JOINT_VEL: Range<usize> = 67..133;
    pub const ROT6D: Range<usize> = 133..259;
    pub const REACTOR_CONTACTS: Range<usize> = 259..263;

    pub const ACTOR_OFFSET: Range<usize> = 263..266;
    pub const ACTOR_YAW: Range<usize> = 266..268;
    pub const ACTOR_LINVEL: Range<usize> = 268..271;
    pub const ACTOR_POS: Range<usize> = 271..337;
    pub const ACTOR_VEL: Range<usize> = 337..403;
    pub const ACTOR_CONTACTS: Range<usize> = 403..407;

    pub const FIELD: Range<usize> = 407..443;

    /// Dimensions holding binary labels (contacts and the interaction field).
    pub fn is_binary(d: usize) -> bool {
        REACTOR_CONTACTS.contains(&d) || ACTOR_CONTACTS.contains(&d) || FIELD.contains(&d)
    }

    /// Pose dimensions compared by the prefix continuity loss: root height,
    /// local positions and rotations of the reactor plus the actor's relative
    /// placement and joint positions.
    pub fn is_pose(d: usize) -> bool {
        d == ROOT_HEIGHT
            || LOCAL_POS.contains(&d)
            || ROT6D.contains(&d)
            || ACTOR_OFFSET.contains(&d)
            || ACTOR_YAW.contains(&d)
            || ACTOR_POS.contains(&d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactorFrame {
    pub root_height: f64,
    /// yaw rate about +Y, then the heading-frame XZ root velocity
    pub root_vel: [f64; 3],
    pub local_pos: [[f64; 3]; JOINT_COUNT - 1],
    pub joint_vel: [[f64; 3]; JOINT_COUNT],
    pub rot6d: [[f64; 6]; JOINT_COUNT - 1],
    pub contacts: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActorFrame {
    pub rel_root_offset: [f64; 3],
    /// (cos, sin) of the actor heading relative to the reactor heading
    pub rel_root_yaw: [f64; 2],
    pub rel_root_linvel: [f64; 3],
    pub rel_joint_pos: [[f64; 3]; JOINT_COUNT],
    pub rel_joint_vel: [[f64; 3]; JOINT_COUNT],
    pub contacts: [f64; 4],
}

/// Row = reactor contact joint, column = actor contact joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionFieldFrame {
    pub values: [[f64; FIELD_SIDE]; FIELD_SIDE],
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionFrame(pub [f64; FRAME_DIM]);

impl Default for InteractionFrame {
    fn default() -> Self {
        Self([0.0; FRAME_DIM])
    }
}

impl InteractionFrame {
    pub fn assemble(x: &ReactorFrame, y: &ActorFrame, field: &InteractionFieldFrame) -> Self {
        let mut v = [0.0; FRAME_DIM];
        x.write(&mut v[..REACTOR_DIM]);
        y.write(&mut v[REACTOR_DIM..REACTOR_DIM + ACTOR_DIM]);
        for (i, row) in field.values.iter().enumerate() {
            v[layout::FIELD.start + i * FIELD_SIDE..][..FIELD_SIDE].copy_from_slice(row);
        }
        Self(v)
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let arr: [f64; FRAME_DIM] = s
            .try_into()
            .map_err(|_| invalid(format!("frame needs {FRAME_DIM} values, got {}", s.len())))?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn reactor(&self) -> ReactorFrame {
        ReactorFrame::read(&self.0[..REACTOR_DIM])
    }

    pub fn actor(&self) -> ActorFrame {
        ActorFrame::read(&self.0[REACTOR_DIM..REACTOR_DIM + ACTOR_DIM])
    }

    pub fn field(&self) -> InteractionFieldFrame {
        let mut values = [[0.0; FIELD_SIDE]; FIELD_SIDE];
        for (i, row) in values.iter_mut().enumerate() {
            row.copy_from_slice(&self.0[layout::FIELD.start + i * FIELD_SIDE..][..FIELD_SIDE]);
        }
        InteractionFieldFrame { values }
    }
}

impl ReactorFrame {
    pub fn write(&self, out: &mut [f64]) {
        assert_eq!(out.len(), REACTOR_DIM);
        out[layout::ROOT_HEIGHT] = self.root_height;
        out[layout::ROOT_VEL].copy_from_slice(&self.root_vel);
        out[layout::LOCAL_POS].copy_from_slice(self.local_pos.as_flattened());
        out[layout::JOINT_VEL].copy_from_slice(self.joint_vel.as_flattened());
        out[layout::ROT6D].copy_from_slice(self.rot6d.as_flattened());
        out[layout::REACTOR_CONTACTS].copy_from_slice(&self.contacts);
    }

    pub fn read(s: &[f64]) -> Self {
        assert_eq!(s.len(), REACTOR_DIM);
        let mut f = ReactorFrame {
            root_height: s[layout::ROOT_HEIGHT],
            root_vel: s[layout::ROOT_VEL].try_into().unwrap(),
            local_pos: [[0.0; 3]; JOINT_COUNT - 1],
            joint_vel: [[0.0; 3]; JOINT_COUNT],
            rot6d: [[0.0; 6]; JOINT_COUNT - 1],
            contacts: s[layout::REACTOR_CONTACTS].try_into().unwrap(),
        };
        f.local_pos.as_flattened_mut().copy_from_slice(&s[layout::LOCAL_POS]);
        f.joint_vel.as_flattened_mut().copy_from_slice(&s[layout::JOINT_VEL]);
        f.rot6d.as_flattened_mut().copy_from_slice(&s[layout::ROT6D]);
        f
    }
}

impl ActorFrame {
    pub fn write(&self, out: &mut [f64]) {
        assert_eq!(out.len(), ACTOR_DIM);
        let o = REACTOR_DIM;
        let at = |r: Range<usize>| (r.start - o)..(r.end - o);
        out[at(layout::ACTOR_OFFSET)].copy_from_slice(&self.rel_root_offset);
        out[at(layout::ACTOR_YAW)].copy_from_slice(&self.rel_root_yaw);
        out[at(layout::ACTOR_LINVEL)].copy_from_slice(&self.rel_root_linvel);
        out[at(layout::ACTOR_POS)].copy_from_slice(self.rel_joint_pos.as_flattened());
        out[at(layout::ACTOR_VEL)].copy_from_slice(self.rel_joint_vel.as_flattened());
        out[at(layout::ACTOR_CONTACTS)].copy_from_slice(&self.contacts);
    }

    pub fn read(s: &[f64]) -> Self {
        assert_eq!(s.len(), ACTOR_DIM);
        let o = REACTOR_DIM;
        let at = |r: Range<usize>| (r.start - o)..(r.end - o);
        let mut f = ActorFrame {
            rel_root_offset: s[at(layout::ACTOR_OFFSET)].try_into().unwrap(),
            rel_root_yaw: s[at(layout::ACTOR_YAW)].try_into().unwrap(),
            rel_root_linvel: s[at(layout::ACTOR_LINVEL)].try_into().unwrap(),
            rel_joint_pos: [[0.0; 3]; JOINT_COUNT],
            rel_joint_vel: [[0.0; 3]; JOINT_COUNT],
            contacts: s[at(layout::ACTOR_CONTACTS)].try_into().unwrap(),
        };
        f.rel_joint_pos.as_flattened_mut().copy_from_slice(&s[at(layout::ACTOR_POS)]);
        f.rel_joint_vel.as_flattened_mut().copy_from_slice(&s[at(layout::ACTOR_VEL)]);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowRole {
    History,
    Prediction,
}

impl WindowRole {
    pub fn len(self) -> usize {
        match self {
            WindowRole::History => HISTORY_LEN,
            WindowRole::Prediction => WINDOW_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWindow {
    pub role: WindowRole,
    pub frames: Vec<InteractionFrame>,
}

impl InteractionWindow {
    pub fn new(role: WindowRole, frames: Vec<InteractionFrame>) -> Result<Self> {
        if frames.len() != role.len() {
            return Err(invalid(format!(
                "{role:?} window needs {} frames, got {}",
                role.len(),
                frames.len()
            )));
        }
        Ok(Self { role, frames })
    }

    /// Row-major `frames x 443` copy.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.frames)
    }
}

pub fn flatten(frames: &[InteractionFrame]) -> Vec<f64> {
    frames.iter().flat_map(|f| f.0.iter().copied()).collect()
}

pub fn unflatten(data: &[f64]) -> Result<Vec<InteractionFrame>> {
    if data.len() % FRAME_DIM != 0 {
        return Err(invalid(format!("flat length {} is not a multiple of {FRAME_DIM}", data.len())));
    }
    data.chunks_exact(FRAME_DIM).map(InteractionFrame::from_slice).collect()
}

/// Maps canonical coordinates back to the global frame:
/// `global = rotate_y(canonical, yaw) + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTransform {
    pub translation: [f64; 3],
    pub yaw: f64,
}

impl Default for CanonicalTransform {
    fn default() -> Self {
        Self { translation: [0.0; 3], yaw: 0.0 }
    }
}

impl CanonicalTransform {
    /// Transform placing `pose`'s root at the XZ origin facing +Z.
    pub fn anchored_at(pose: &GlobalPose) -> Self {
        let r = pose.root();
        Self { translation: [r.x, 0.0, r.z], yaw: pose.root_yaw }
    }

    pub fn to_global(&self, p: &Vector3<f64>) -> Vector3<f64> {
        rotate_y(p, self.yaw) + Vector3::from(self.translation)
    }

    pub fn to_canonical(&self, p: &Vector3<f64>) -> Vector3<f64> {
        rotate_y(&(p - Vector3::from(self.translation)), -self.yaw)
    }

    pub fn pose_to_global(&self, pose: &GlobalPose) -> GlobalPose {
        pose.transformed(self.yaw, &Vector3::from(self.translation))
    }

    pub fn pose_to_canonical(&self, pose: &GlobalPose) -> GlobalPose {
        let mut joints = pose.joints;
        for p in joints.iter_mut() {
            *p = self.to_canonical(p);
        }
        GlobalPose::new(joints, pose.root_yaw - self.yaw)
    }
}

fn joint_velocity(clip: &MotionClip, n: usize, j: usize) -> Vector3<f64> {
    let f = &clip.frames;
    match (n, f.len()) {
        (_, 0 | 1) => Vector3::zeros(),
        (0, _) => (f[1].joints[j] - f[0].joints[j]) * clip.fps,
        _ => (f[n].joints[j] - f[n - 1].joints[j]) * clip.fps,
    }
}

fn yaw_rate(clip: &MotionClip, n: usize) -> f64 {
    let f = &clip.frames;
    match (n, f.len()) {
        (_, 0 | 1) => 0.0,
        (0, _) => wrap_angle(f[1].root_yaw - f[0].root_yaw) * clip.fps,
        _ => wrap_angle(f[n].root_yaw - f[n - 1].root_yaw) * clip.fps,
    }
}

/// Binary contact labels for the four foot joints of every frame.
pub fn detect_foot_contacts(
    clip: &MotionClip,
    skeleton: &Skeleton,
    height_thresh: f64,
    speed_thresh: f64,
) -> Result<Vec<[f64; 4]>> {
    if clip.is_empty() {
        return Err(invalid("cannot detect contacts on an empty clip"));
    }
    if !(height_thresh > 0.0 && speed_thresh > 0.0) {
        return Err(invalid("contact thresholds must be positive"));
    }
    Ok((0..clip.len())
        .map(|n| {
            let mut labels = [0.0; 4];
            for (k, &j) in skeleton.foot_joint_ids.iter().enumerate() {
                let v = joint_velocity(clip, n, j);
                let speed = (v.x * v.x + v.z * v.z).sqrt();
                let height = clip.frames[n].joints[j].y;
                if height < height_thresh && speed < speed_thresh {
                    labels[k] = 1.0;
                }
            }
            labels
        })
        .collect())
}

pub fn detect_default_contacts(clip: &MotionClip, skeleton: &Skeleton) -> Result<Vec<[f64; 4]>> {
    detect_foot_contacts(clip, skeleton, FOOT_HEIGHT_THRESH, FOOT_SPEED_THRESH)
}

/// Distance exactly equal to `thresh` counts as contact.
pub fn compute_interaction_field(
    pose_x: &GlobalPose,
    pose_y: &GlobalPose,
    skeleton: &Skeleton,
    thresh: f64,
) -> InteractionFieldFrame {
    let mut values = [[0.0; FIELD_SIDE]; FIELD_SIDE];
    for (i, &jx) in skeleton.contact_field_ids.iter().enumerate() {
        for (k, &jy) in skeleton.contact_field_ids.iter().enumerate() {
            if (pose_x.joints[jx] - pose_y.joints[jy]).norm() <= thresh {
                values[i][k] = 1.0;
            }
        }
    }
    InteractionFieldFrame { values }
}

fn encode_reactor(
    clip: &MotionClip,
    n: usize,
    contacts: [f64; 4],
    skeleton: &Skeleton,
) -> ReactorFrame {
    let pose = &clip.frames[n];
    let yaw = pose.root_yaw;
    let root = pose.root();
    let root_v = rotate_y(&joint_velocity(clip, n, 0), -yaw);

    let mut local_pos = [[0.0; 3]; JOINT_COUNT - 1];
    let mut rot6d = [[0.0; 6]; JOINT_COUNT - 1];
    for j in 1..JOINT_COUNT {
        let mut l = rotate_y(&(pose.joints[j] - root), -yaw);
        l.y = pose.joints[j].y;
        local_pos[j - 1] = [l.x, l.y, l.z];

        let parent = skeleton.parent(j).expect("non-root joint");
        let bone = rotate_y(&(pose.joints[j] - pose.joints[parent]), -yaw);
        let rest = skeleton.rest_offset(j);
        let r = if bone.norm() > 1e-12 && rest.norm() > 1e-12 {
            rotation_between(&rest, &bone)
        } else {
            nalgebra::Matrix3::identity()
        };
        rot6d[j - 1] = rot_to_6d(&r);
    }
    let mut joint_vel = [[0.0; 3]; JOINT_COUNT];
    for (j, v) in joint_vel.iter_mut().enumerate() {
        let l = rotate_y(&joint_velocity(clip, n, j), -yaw);
        *v = [l.x, l.y, l.z];
    }
    ReactorFrame {
        root_height: root.y,
        root_vel: [yaw_rate(clip, n), root_v.x, root_v.z],
        local_pos,
        joint_vel,
        rot6d,
        contacts,
    }
}

fn encode_actor(reactor: &MotionClip, actor: &MotionClip, n: usize, contacts: [f64; 4]) -> ActorFrame {
    let px = &reactor.frames[n];
    let py = &actor.frames[n];
    let yaw = px.root_yaw;
    let origin = px.root();
    let rel = |v: Vector3<f64>| {
        let l = rotate_y(&v, -yaw);
        [l.x, l.y, l.z]
    };
    let rel_yaw = py.root_yaw - yaw;
    let mut rel_joint_pos = [[0.0; 3]; JOINT_COUNT];
    let mut rel_joint_vel = [[0.0; 3]; JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        rel_joint_pos[j] = rel(py.joints[j] - origin);
        rel_joint_vel[j] = rel(joint_velocity(actor, n, j));
    }
    ActorFrame {
        rel_root_offset: rel(py.root() - origin),
        rel_root_yaw: [rel_yaw.cos(), rel_yaw.sin()],
        rel_root_linvel: rel(joint_velocity(actor, n, 0)),
        rel_joint_pos,
        rel_joint_vel,
        contacts,
    }
}

/// Encodes frames `range` of a reactor/actor clip pair. The returned
/// transform maps the canonical frame anchored at `anchor_frame` back to
/// global coordinates. Contact labels are indexed by clip frame.
#[allow(clippy::too_many_arguments)]
pub fn canonicalize(
    reactor: &MotionClip,
    actor: &MotionClip,
    range: Range<usize>,
    anchor_frame: usize,
    contacts_x: &[[f64; 4]],
    contacts_y: &[[f64; 4]],
    skeleton: &Skeleton,
    field_thresh: f64,
) -> Result<(Vec<InteractionFrame>, CanonicalTransform)> {
    if reactor.len() != actor.len() {
        return Err(invalid(format!(
            "clip lengths differ: reactor {} vs actor {}",
            reactor.len(),
            actor.len()
        )));
    }
    if range.end > reactor.len() || range.is_empty() {
        return Err(invalid(format!("frame range {range:?} outside clip of {}", reactor.len())));
    }
    if anchor_frame >= reactor.len() {
        return Err(invalid(format!("anchor frame {anchor_frame} outside clip")));
    }
    if contacts_x.len() != reactor.len() || contacts_y.len() != actor.len() {
        return Err(invalid("contact labels must cover every clip frame"));
    }
    if (reactor.fps - actor.fps).abs() > 1e-12 {
        return Err(invalid("clips have different frame rates"));
    }
    let transform = CanonicalTransform::anchored_at(&reactor.frames[anchor_frame]);
    let frames = range
        .map(|n| {
            let x = encode_reactor(reactor, n, contacts_x[n], skeleton);
            let y = encode_actor(reactor, actor, n, contacts_y[n]);
            let field =
                compute_interaction_field(&reactor.frames[n], &actor.frames[n], skeleton, field_thresh);
            InteractionFrame::assemble(&x, &y, &field)
        })
        .collect();
    Ok((frames, transform))
}

/// Whole-clip canonicalization anchored at frame 0 with default thresholds.
pub fn canonicalize_clips(
    reactor: &MotionClip,
    actor: &MotionClip,
    skeleton: &Skeleton,
) -> Result<(Vec<InteractionFrame>, CanonicalTransform)> {
    let cx = detect_default_contacts(reactor, skeleton)?;
    let cy = detect_default_contacts(actor, skeleton)?;
    canonicalize(reactor, actor, 0..reactor.len(), 0, &cx, &cy, skeleton, FIELD_THRESH)
}

/// Canonical root placement used to start integration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RootState {
    pub xz: [f64; 2],
    pub yaw: f64,
}

/// Integrates root velocities from the canonical origin (frame 0 is the
/// anchor) and maps the result to global coordinates.
pub fn recover(frames: &[ReactorFrame], transform: &CanonicalTransform, fps: f64) -> Result<MotionClip> {
    recover_from(frames, RootState::default(), transform, fps)
}

pub fn recover_from(
    frames: &[ReactorFrame],
    start: RootState,
    transform: &CanonicalTransform,
    fps: f64,
) -> Result<MotionClip> {
    if frames.is_empty() {
        return Err(invalid("cannot recover an empty frame sequence"));
    }
    if !(fps > 0.0) {
        return Err(invalid("fps must be positive"));
    }
    let mut yaw = start.yaw;
    let mut root_xz = Vector3::new(start.xz[0], 0.0, start.xz[1]);
    let mut out = Vec::with_capacity(frames.len());
    for (n, f) in frames.iter().enumerate() {
        if n > 0 {
            yaw += f.root_vel[0] / fps;
            root_xz += rotate_y(&Vector3::new(f.root_vel[1], 0.0, f.root_vel[2]), yaw) / fps;
        }
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        joints[0] = Vector3::new(root_xz.x, f.root_height, root_xz.z);
        for j in 1..JOINT_COUNT {
            let l = f.local_pos[j - 1];
            let mut g = rotate_y(&Vector3::new(l[0], 0.0, l[2]), yaw) + root_xz;
            g.y = l[1];
            joints[j] = g;
        }
        let canonical = GlobalPose::new(joints, yaw);
        out.push(transform.pose_to_global(&canonical));
    }
    Ok(MotionClip::new(fps, AgentId::Reactor, out))
}

/// Places actor joints relative to an already recovered reactor trajectory.
pub fn decode_actor(reactor: &[GlobalPose], actor: &[ActorFrame]) -> Result<Vec<GlobalPose>> {
    if reactor.len() != actor.len() {
        return Err(invalid("reactor and actor frame counts differ"));
    }
    Ok(reactor
        .iter()
        .zip(actor)
        .map(|(x, y)| {
            let origin = x.root();
            let mut joints = [Vector3::zeros(); JOINT_COUNT];
            for (j, p) in joints.iter_mut().enumerate() {
                *p = origin + rotate_y(&Vector3::from(y.rel_joint_pos[j]), x.root_yaw);
            }
            let rel_yaw = y.rel_root_yaw[1].atan2(y.rel_root_yaw[0]);
            GlobalPose::new(joints, x.root_yaw + rel_yaw)
        })
        .collect())
}
