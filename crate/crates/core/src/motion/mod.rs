//! Raw motion containers and the reactor-centric feature representation.

pub mod clip;
pub mod features;
pub mod normalize;
pub mod rotation;
pub mod skeleton;

pub use clip::{rotate_y, wrap_angle, AgentId, GlobalPose, MotionClip, DEFAULT_FPS};
pub use features::{
    canonicalize, canonicalize_clips, compute_interaction_field, decode_actor, detect_default_contacts,
    detect_foot_contacts, recover, recover_from, ActorFrame, CanonicalTransform, InteractionFieldFrame,
    InteractionFrame, InteractionWindow, ReactorFrame, RootState, WindowRole, FRAME_DIM, HISTORY_LEN,
    WINDOW_LEN,
};
pub use normalize::FeatureNormalizer;
pub use rotation::{rot_to_6d, six_d_to_rot};
pub use skeleton::{Skeleton, JOINT_COUNT};
