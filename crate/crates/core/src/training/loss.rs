//! Training objectives over `k x 443` windows. Every `*_grad` function
//! returns the value together with its gradient with respect to `z0_hat`.
//!
//! The auxiliary terms average over frames and sum over joints (or joint
//! pairs). Velocities in the feature vector are heading-frame rotations of
//! the global velocities, so their norms equal the global ones.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::motion::features::{layout, FRAME_DIM};
use crate::motion::normalize::FeatureNormalizer;
use crate::motion::skeleton::Skeleton;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub foot: f64,
    pub inter: f64,
    pub prefix: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { foot: 0.2, inter: 0.5, prefix: 0.1 }
    }
}

impl LossWeights {
    pub fn simple_only() -> Self {
        Self { foot: 0.0, inter: 0.0, prefix: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.foot, self.inter, self.prefix].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub simple: f64,
    pub foot: f64,
    pub inter: f64,
    pub prefix: f64,
}

impl LossBreakdown {
    pub fn combine(simple: f64, foot: f64, inter: f64, prefix: f64, w: &LossWeights) -> Self {
        Self { total: simple + w.foot * foot + w.inter * inter + w.prefix * prefix, simple, foot, inter, prefix }
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.simple, self.foot, self.inter, self.prefix].iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.total += s * other.total;
        self.simple += s * other.simple;
        self.foot += s * other.foot;
        self.inter += s * other.inter;
        self.prefix += s * other.prefix;
    }
}

fn check_window(z: &[f64]) -> Result<usize> {
    if z.is_empty() || z.len() % FRAME_DIM != 0 {
        return Err(invalid(format!("window length {} is not a positive multiple of {FRAME_DIM}", z.len())));
    }
    Ok(z.len() / FRAME_DIM)
}

pub fn loss_simple(z0: &[f64], z0_hat: &[f64]) -> Result<f64> {
    loss_simple_grad(z0, z0_hat).map(|(v, _)| v)
}

pub fn loss_simple_grad(z0: &[f64], z0_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    if z0.len() != z0_hat.len() || z0.is_empty() {
        return Err(invalid(format!("shape mismatch: {} vs {}", z0.len(), z0_hat.len())));
    }
    let n = z0.len() as f64;
    let mut sum = 0.0;
    let grad = z0_hat
        .iter()
        .zip(z0)
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, grad))
}

fn foot_blocks() -> [(usize, usize); 2] {
    [(layout::JOINT_VEL.start, layout::REACTOR_CONTACTS.start), (layout::ACTOR_VEL.start, layout::ACTOR_CONTACTS.start)]
}

pub fn loss_foot(z0_hat: &[f64], skeleton: &Skeleton) -> Result<f64> {
    loss_foot_grad(z0_hat, skeleton).map(|(v, _)| v)
}

/// Mean over frames of the summed `|c * v|^2` over both agents' foot joints.
pub fn loss_foot_grad(z0_hat: &[f64], skeleton: &Skeleton) -> Result<(f64, Vec<f64>)> {
    let frames = check_window(z0_hat)?;
    let scale = 1.0 / frames as f64;
    let mut grad = vec![0.0; z0_hat.len()];
    let mut sum = 0.0;
    for n in 0..frames {
        let base = n * FRAME_DIM;
        for (vel, contact) in foot_blocks() {
            for (slot, &j) in skeleton.foot_joint_ids.iter().enumerate() {
                let ci = base + contact + slot;
                let c = z0_hat[ci];
                let vi = base + vel + 3 * j;
                let v2: f64 = (0..3).map(|a| z0_hat[vi + a] * z0_hat[vi + a]).sum();
                sum += c * c * v2;
                grad[ci] += scale * 2.0 * c * v2;
                for a in 0..3 {
                    grad[vi + a] += scale * 2.0 * c * c * z0_hat[vi + a];
                }
            }
        }
    }
    Ok((sum * scale, grad))
}

/// Index of the feature holding coordinate `a` of reactor joint `j` in the
/// reactor's per-frame heading frame, or `None` for the root (always at the
/// origin of that frame).
fn reactor_joint_dim(j: usize, a: usize) -> Option<usize> {
    (j > 0).then(|| layout::LOCAL_POS.start + 3 * (j - 1) + a)
}

pub fn loss_inter(z0_hat: &[f64], skeleton: &Skeleton) -> Result<f64> {
    loss_inter_grad(z0_hat, skeleton).map(|(v, _)| v)
}

/// Mean over frames of the summed `|F_ik (p_i - q_k)|^2` over the contact
/// joint pairs, both agents expressed relative to the reactor root.
pub fn loss_inter_grad(z0_hat: &[f64], skeleton: &Skeleton) -> Result<(f64, Vec<f64>)> {
    let frames = check_window(z0_hat)?;
    let scale = 1.0 / frames as f64;
    let ids = skeleton.contact_field_ids;
    let side = ids.len();
    let mut grad = vec![0.0; z0_hat.len()];
    let mut sum = 0.0;
    for n in 0..frames {
        let base = n * FRAME_DIM;
        let height = z0_hat[base + layout::ROOT_HEIGHT];
        for (i, &ji) in ids.iter().enumerate() {
            let p: [f64; 3] = std::array::from_fn(|a| match reactor_joint_dim(ji, a) {
                Some(d) if a == 1 => z0_hat[base + d] - height,
                Some(d) => z0_hat[base + d],
                None => 0.0,
            });
            for (k, &jk) in ids.iter().enumerate() {
                let fi = base + layout::FIELD.start + i * side + k;
                let f = z0_hat[fi];
                let qi = base + layout::ACTOR_POS.start + 3 * jk;
                let diff: [f64; 3] = std::array::from_fn(|a| p[a] - z0_hat[qi + a]);
                let d2: f64 = diff.iter().map(|d| d * d).sum();
                sum += f * f * d2;
                grad[fi] += scale * 2.0 * f * d2;
                for a in 0..3 {
                    let g = scale * 2.0 * f * f * diff[a];
                    grad[qi + a] -= g;
                    if let Some(d) = reactor_joint_dim(ji, a) {
                        grad[base + d] += g;
                        if a == 1 {
                            grad[base + layout::ROOT_HEIGHT] -= g;
                        }
                    }
                }
            }
        }
    }
    Ok((sum * scale, grad))
}

pub fn pose_dim_count() -> usize {
    (0..FRAME_DIM).filter(|&d| layout::is_pose(d)).count()
}

pub fn loss_prefix(history_last: &[f64], z0_hat: &[f64]) -> Result<f64> {
    loss_prefix_grad(history_last, z0_hat).map(|(v, _)| v)
}

/// Mean squared difference over pose dimensions between the last history
/// frame and the first predicted frame.
pub fn loss_prefix_grad(history_last: &[f64], z0_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_window(z0_hat)?;
    if history_last.len() != FRAME_DIM {
        return Err(invalid("history frame must have 443 values"));
    }
    let count = pose_dim_count() as f64;
    let mut grad = vec![0.0; z0_hat.len()];
    let mut sum = 0.0;
    for d in (0..FRAME_DIM).filter(|&d| layout::is_pose(d)) {
        let diff = z0_hat[d] - history_last[d];
        sum += diff * diff;
        grad[d] = 2.0 * diff / count;
    }
    Ok((sum / count, grad))
}

/// Inputs of one objective evaluation. `z0`, `z0_hat` and `history_last`
/// are normalized features; the simple term is measured there while the
/// auxiliary terms use physical units.
pub struct LossInputs<'a> {
    pub z0: &'a [f64],
    pub z0_hat: &'a [f64],
    pub history_last: &'a [f64],
    pub normalizer: &'a FeatureNormalizer,
    pub skeleton: &'a Skeleton,
}

pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossBreakdown> {
    total_loss_grad(inputs, weights).map(|(b, _)| b)
}

pub fn total_loss_grad(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<(LossBreakdown, Vec<f64>)> {
    weights.validate()?;
    let (simple, mut grad) = loss_simple_grad(inputs.z0, inputs.z0_hat)?;
    let mut phys = inputs.z0_hat.to_vec();
    inputs.normalizer.denormalize_flat(&mut phys)?;
    let mut last = inputs.history_last.to_vec();
    inputs.normalizer.denormalize_flat(&mut last)?;
    let (foot, g_foot) = loss_foot_grad(&phys, inputs.skeleton)?;
    let (inter, g_inter) = loss_inter_grad(&phys, inputs.skeleton)?;
    let (prefix, g_prefix) = loss_prefix_grad(&last, &phys)?;
    let std = &inputs.normalizer.std;
    for (i, g) in grad.iter_mut().enumerate() {
        let aux = weights.foot * g_foot[i] + weights.inter * g_inter[i] + weights.prefix * g_prefix[i];
        *g += aux * std[i % FRAME_DIM];
    }
    Ok((LossBreakdown::combine(simple, foot, inter, prefix, weights), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::skeleton::joint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: usize = 4;

    fn random(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..K * FRAME_DIM).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn simple_values() {
        assert_eq!(loss_simple(&[0.0], &[2.0]).unwrap(), 4.0);
        let a = random(1);
        assert_eq!(loss_simple(&a, &a).unwrap(), 0.0);
        let b = random(2);
        let naive = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((loss_simple(&a, &b).unwrap() - naive).abs() < 1e-15);
        assert!(loss_simple(&a, &b[1..]).is_err());
    }

    #[test]
    fn foot_single_term() {
        let sk = Skeleton::smpl22();
        let mut z = vec![0.0; K * FRAME_DIM];
        assert_eq!(loss_foot(&z, &sk).unwrap(), 0.0);
        for n in 0..K {
            z[n * FRAME_DIM + layout::JOINT_VEL.start + 3 * joint::LEFT_FOOT] = 1.0;
        }
        assert_eq!(loss_foot(&z, &sk).unwrap(), 0.0);
        let slot = sk.foot_joint_ids.iter().position(|&j| j == joint::LEFT_FOOT).unwrap();
        for n in 0..K {
            z[n * FRAME_DIM + layout::REACTOR_CONTACTS.start + slot] = 1.0;
        }
        assert!((loss_foot(&z, &sk).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inter_single_pair() {
        let sk = Skeleton::smpl22();
        let mut z = vec![0.0; K * FRAME_DIM];
        for n in 0..K {
            let b = n * FRAME_DIM;
            z[b + layout::ROOT_HEIGHT] = 0.9;
            // reactor head at 0.3 m in front of the actor pelvis
            z[b + layout::LOCAL_POS.start + 3 * (joint::HEAD - 1) + 1] = 1.6;
            z[b + layout::LOCAL_POS.start + 3 * (joint::HEAD - 1) + 2] = 0.3;
            z[b + layout::ACTOR_POS.start + 1] = 0.7;
        }
        assert_eq!(loss_inter(&z, &sk).unwrap(), 0.0);
        let head_slot = sk.contact_field_ids.iter().position(|&j| j == joint::HEAD).unwrap();
        for n in 0..K {
            z[n * FRAME_DIM + layout::FIELD.start + head_slot * 6] = 1.0;
        }
        assert!((loss_inter(&z, &sk).unwrap() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn prefix_masking() {
        let mut last = random(3)[..FRAME_DIM].to_vec();
        last[layout::LOCAL_POS.start] = 0.0;
        let mut z = random(4);
        z[..FRAME_DIM].copy_from_slice(&last);
        assert_eq!(loss_prefix(&last, &z).unwrap(), 0.0);
        z[layout::LOCAL_POS.start] = 0.1;
        assert!((loss_prefix(&last, &z).unwrap() - 0.01 / 261.0).abs() < 1e-18);
        z[layout::LOCAL_POS.start] = 0.0;
        z[layout::JOINT_VEL.start] += 0.5;
        z[layout::ACTOR_CONTACTS.start] += 1.0;
        assert_eq!(loss_prefix(&last, &z).unwrap(), 0.0);
        assert_eq!(pose_dim_count(), 261);
    }

    #[test]
    fn weighted_sum() {
        let b = LossBreakdown::combine(1.0, 2.0, 3.0, 4.0, &LossWeights::default());
        assert!((b.total - 3.3).abs() < 1e-12);
    }

    #[test]
    fn total_zero_weights_and_perfect_prediction() {
        let sk = Skeleton::smpl22();
        let norm = FeatureNormalizer::identity();
        let z0 = random(5);
        let zh = random(6);
        let last = random(7)[..FRAME_DIM].to_vec();
        let inputs = LossInputs { z0: &z0, z0_hat: &zh, history_last: &last, normalizer: &norm, skeleton: &sk };
        let b = total_loss(&inputs, &LossWeights::simple_only()).unwrap();
        assert_eq!(b.total, loss_simple(&z0, &zh).unwrap());

        let mut zero = vec![0.0; K * FRAME_DIM];
        zero[layout::ROOT_HEIGHT] = 0.0;
        let inputs = LossInputs { z0: &zero, z0_hat: &zero, history_last: &zero[..FRAME_DIM], normalizer: &norm, skeleton: &sk };
        assert_eq!(total_loss(&inputs, &LossWeights::default()).unwrap().total, 0.0);
    }

    fn fd_check(f: impl Fn(&[f64]) -> (f64, Vec<f64>), x: &[f64], seed: u64) {
        let (_, g) = f(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = 1e-5;
        for _ in 0..300 {
            let i = rng.random_range(0..x.len());
            let mut up = x.to_vec();
            up[i] += eps;
            let mut dn = x.to_vec();
            dn[i] -= eps;
            let num = (f(&up).0 - f(&dn).0) / (2.0 * eps);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "dim {i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn term_gradients_match_finite_differences() {
        let sk = Skeleton::smpl22();
        let x = random(8);
        let last = random(9)[..FRAME_DIM].to_vec();
        fd_check(|z| loss_foot_grad(z, &sk).unwrap(), &x, 1);
        fd_check(|z| loss_inter_grad(z, &sk).unwrap(), &x, 2);
        fd_check(|z| loss_prefix_grad(&last, z).unwrap(), &x, 3);
        let t = random(10);
        fd_check(|z| loss_simple_grad(&t, z).unwrap(), &x, 4);
    }
}
