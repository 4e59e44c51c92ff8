//! Fixed feature extractors: a kinematic motion descriptor and the
//! inter-agent cross-distance space.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::motion::clip::{rotate_y, GlobalPose, MotionClip};
use crate::motion::features::detect_default_contacts;
use crate::motion::skeleton::{Skeleton, JOINT_COUNT};
use crate::nn::text::embed_text;

pub const MOTION_FEATURE_DIM: usize = 256;
pub const DESCRIPTOR_DIM: usize = 4 * JOINT_COUNT * 3 + 8;
pub const CROSS_DIM: usize = 100;
const PROJECTION_SEED: u64 = 0x6d6f_7469_6f6e;

fn projection() -> &'static DMatrix<f64> {
    static P: OnceLock<DMatrix<f64>> = OnceLock::new();
    P.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let g = DMatrix::from_fn(DESCRIPTOR_DIM, MOTION_FEATURE_DIM, |_, _| StandardNormal.sample(&mut rng));
        g.qr().q().transpose()
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-window kinematic statistics before projection: heading-local joint
/// positions and velocities (mean, std), root speed, root height and
/// foot-contact rates.
pub fn motion_descriptor(window: &MotionClip, skeleton: &Skeleton) -> Result<Vec<f64>> {
    let n = window.len();
    if n < 2 {
        return Err(invalid(format!("motion features need at least 2 frames, got {n}")));
    }
    let f = &window.frames;
    let local: Vec<Vec<[f64; 3]>> = f
        .iter()
        .map(|p| {
            let root = p.root();
            p.joints
                .iter()
                .map(|j| {
                    let mut d = j - root;
                    d.y = j.y;
                    let r = rotate_y(&d, -p.root_yaw);
                    [r.x, r.y, r.z]
                })
                .collect()
        })
        .collect();
    let vel: Vec<Vec<[f64; 3]>> = (0..n)
        .map(|t| {
            let (a, b) = if t == 0 { (0, 1) } else { (t - 1, t) };
            (0..JOINT_COUNT)
                .map(|j| {
                    let v = rotate_y(&((f[b].joints[j] - f[a].joints[j]) * window.fps), -f[t].root_yaw);
                    [v.x, v.y, v.z]
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(DESCRIPTOR_DIM);
    for series in [&local, &vel] {
        let mut means = Vec::with_capacity(JOINT_COUNT * 3);
        let mut stds = Vec::with_capacity(JOINT_COUNT * 3);
        for j in 0..JOINT_COUNT {
            for c in 0..3 {
                let (m, s) = mean_std(series.iter().map(move |fr| fr[j][c]));
                means.push(m);
                stds.push(s);
            }
        }
        out.extend(means);
        out.extend(stds);
    }
    let speed = (0..n).map(|t| {
        let (a, b) = if t == 0 { (0, 1) } else { (t - 1, t) };
        let d = f[b].root() - f[a].root();
        (d.x * d.x + d.z * d.z).sqrt() * window.fps
    });
    let (m, s) = mean_std(speed);
    out.extend([m, s]);
    let (m, s) = mean_std(f.iter().map(|p| p.root().y));
    out.extend([m, s]);
    let contacts = detect_default_contacts(window, skeleton)?;
    for k in 0..4 {
        out.push(contacts.iter().map(|c| c[k]).sum::<f64>() / n as f64);
    }
    debug_assert_eq!(out.len(), DESCRIPTOR_DIM);
    Ok(out)
}

/// The descriptor projected onto a fixed orthonormal basis of 256 directions.
pub fn extract_motion_features(window: &MotionClip, skeleton: &Skeleton) -> Result<Vec<f64>> {
    let d = DVector::from_vec(motion_descriptor(window, skeleton)?);
    Ok((projection() * d).data.into())
}

/// Text side of the matching distance: the hashed label embedding at the
/// motion feature width.
pub fn text_features(label: &str) -> Vec<f64> {
    embed_text(label, MOTION_FEATURE_DIM).vector
}

/// Row-major 10x10 distances, reactor joints along rows.
pub fn cross_distance_features(pose_x: &GlobalPose, pose_y: &GlobalPose, skeleton: &Skeleton) -> Vec<f64> {
    let ids = &skeleton.cross_distance_ids;
    let mut out = Vec::with_capacity(CROSS_DIM);
    for &i in ids {
        for &j in ids {
            out.push((pose_x.joints[i] - pose_y.joints[j]).norm());
        }
    }
    out
}

/// Per-frame cross-distance features averaged over the window.
pub fn cross_window_features(x: &[GlobalPose], y: &[GlobalPose], skeleton: &Skeleton) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() != y.len() {
        return Err(invalid(format!("cross-distance windows need equal non-zero lengths, got {} and {}", x.len(), y.len())));
    }
    let mut acc = vec![0.0; CROSS_DIM];
    for (a, b) in x.iter().zip(y) {
        for (s, v) in acc.iter_mut().zip(cross_distance_features(a, b, skeleton)) {
            *s += v;
        }
    }
    acc.iter_mut().for_each(|s| *s /= x.len() as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, Scenario};

    #[test]
    fn projection_is_orthonormal() {
        let p = projection();
        assert_eq!(p.shape(), (MOTION_FEATURE_DIM, DESCRIPTOR_DIM));
        let g = p * p.transpose();
        assert!((g - DMatrix::identity(MOTION_FEATURE_DIM, MOTION_FEATURE_DIM)).amax() < 1e-10);
    }

    #[test]
    fn motion_features_shape_and_direction() {
        let sk = Skeleton::smpl22();
        let rec = synth_generate(Scenario::Mirror, 60, 4).unwrap();
        let a = extract_motion_features(&rec.actor, &sk).unwrap();
        assert_eq!(a.len(), MOTION_FEATURE_DIM);
        assert_eq!(a, extract_motion_features(&rec.actor, &sk).unwrap());
        let mut rev = rec.actor.clone();
        rev.frames.reverse();
        let b = extract_motion_features(&rev, &sk).unwrap();
        assert!(super::super::stats::l2(&a, &b) > 1e-3);
        assert!(extract_motion_features(&rec.actor.slice(0, 1), &sk).is_err());
    }

    #[test]
    fn cross_features_symmetry() {
        let sk = Skeleton::smpl22();
        let rec = synth_generate(Scenario::Follow, 90, 2).unwrap();
        let (x, y) = (&rec.reactor.frames[3], &rec.actor.frames[3]);
        assert!(cross_distance_features(x, x, &sk).iter().step_by(11).all(|&v| v == 0.0));
        let xy = cross_distance_features(x, y, &sk);
        let yx = cross_distance_features(y, x, &sk);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(xy[i * 10 + j], yx[j * 10 + i]);
            }
        }
    }
}
