//! Noise schedules, closed-form forward diffusion, the DDPM posterior step
//! driven by a predicted clean sample, and classifier-free guidance.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::motion::features::{FRAME_DIM, WINDOW_LEN};
use crate::nn::text::TextEmbedding;

pub const DEFAULT_STEPS: usize = 8;
pub const DEFAULT_GUIDANCE: f64 = 5.0;
pub const DEFAULT_MASK_RATE: f64 = 0.15;

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "linear" => Ok(Self::Linear),
            other => Err(invalid(format!("unknown schedule kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub beta: Vec<f64>,
    /// Coefficient on the predicted clean sample in the posterior mean (index 0 unused).
    pub coef_x0: Vec<f64>,
    /// Coefficient on the current noisy sample in the posterior mean (index 0 unused).
    pub coef_xt: Vec<f64>,
    pub posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// Builds a schedule directly from per-step alphas.
    pub fn from_alphas(kind: ScheduleKind, alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("schedule needs at least one step"));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(invalid("every alpha must lie in (0, 1)"));
        }
        let t = alpha.len();
        let beta: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        let mut alpha_bar = Vec::with_capacity(t);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let mut coef_x0 = vec![0.0; t];
        let mut coef_xt = vec![0.0; t];
        let mut posterior_var = vec![0.0; t];
        for s in 1..t {
            (coef_x0[s], coef_xt[s], posterior_var[s]) =
                posterior_coefficients(alpha_bar[s - 1], alpha_bar[s], alpha[s]);
        }
        Ok(Self { kind, alpha, alpha_bar, beta, coef_x0, coef_xt, posterior_var })
    }
}

/// Posterior mean coefficients (on the clean prediction, on `z_t`) and variance.
pub fn posterior_coefficients(alpha_bar_prev: f64, alpha_bar: f64, alpha: f64) -> (f64, f64, f64) {
    let beta = 1.0 - alpha;
    let denom = 1.0 - alpha_bar;
    (
        alpha_bar_prev.sqrt() * beta / denom,
        alpha.sqrt() * (1.0 - alpha_bar_prev) / denom,
        beta * (1.0 - alpha_bar_prev) / denom,
    )
}

pub fn build_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid("schedule step count must be at least 1"));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Cosine => {
            let f = |t: f64| (((t / steps as f64) + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * PI / 2.0).cos().powi(2);
            (0..steps).map(|i| (1.0 - f(i as f64 + 1.0) / f(i as f64)).clamp(1e-8, MAX_BETA)).collect()
        }
        ScheduleKind::Linear => {
            // endpoints of the 1000-step DDPM schedule rescaled to `steps`
            let scale = 1000.0 / steps as f64;
            let (lo, hi) = ((1e-4 * scale).min(MAX_BETA), (0.02 * scale).min(MAX_BETA));
            (0..steps)
                .map(|i| if steps == 1 { hi } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 })
                .collect()
        }
    };
    NoiseSchedule::from_alphas(kind, betas.iter().map(|b| 1.0 - b).collect())
}

/// `sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * noise`
pub fn forward_diffuse(z0: &[f64], t: usize, noise: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if t >= sched.steps() {
        return Err(invalid(format!("diffusion step {t} outside [0, {})", sched.steps())));
    }
    if z0.len() != noise.len() {
        return Err(invalid("signal and noise shapes differ"));
    }
    let a = sched.alpha_bar[t].sqrt();
    let b = (1.0 - sched.alpha_bar[t]).sqrt();
    Ok(z0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect())
}

/// One reverse step from `t` to `t - 1`. At `t = 0` the prediction is returned
/// unchanged and no noise is drawn.
pub fn posterior_step(
    z_t: &[f64],
    z0_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if t >= sched.steps() {
        return Err(invalid(format!("diffusion step {t} outside [0, {})", sched.steps())));
    }
    if z_t.len() != z0_hat.len() {
        return Err(invalid("posterior inputs differ in shape"));
    }
    if t == 0 {
        return Ok(z0_hat.to_vec());
    }
    if noise.len() != z_t.len() {
        return Err(invalid("posterior noise has the wrong shape"));
    }
    let (cx0, cxt) = (sched.coef_x0[t], sched.coef_xt[t]);
    let sigma = sched.posterior_var[t].sqrt();
    Ok(z_t
        .iter()
        .zip(z0_hat)
        .zip(noise)
        .map(|((xt, x0), e)| cx0 * x0 + cxt * xt + sigma * e)
        .collect())
}

/// `uncond + w * (cond - uncond)`
pub fn cfg_combine(pred_uncond: &[f64], pred_cond: &[f64], w: f64) -> Vec<f64> {
    assert_eq!(pred_uncond.len(), pred_cond.len(), "guidance inputs differ in shape");
    pred_uncond.iter().zip(pred_cond).map(|(u, c)| u + w * (c - u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub w: f64,
    pub mask_rate: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { w: DEFAULT_GUIDANCE, mask_rate: DEFAULT_MASK_RATE }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0) {
            return Err(invalid("guidance weight must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(invalid("text mask rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Anything that predicts a clean `k x 443` window from a noisy one.
pub trait Denoise {
    fn denoise(&self, z_t: &[f64], history: &[f64], t: usize, cond: &TextEmbedding) -> Result<Vec<f64>>;
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Guided prediction at step `t`. With a null condition only one
/// denoiser call is made.
pub fn guided_prediction<D: Denoise + ?Sized>(
    denoiser: &D,
    z_t: &[f64],
    history: &[f64],
    t: usize,
    cond: &TextEmbedding,
    w: f64,
) -> Result<Vec<f64>> {
    if cond.null_flag {
        return denoiser.denoise(z_t, history, t, cond);
    }
    let uncond = denoiser.denoise(z_t, history, t, &cond.to_null())?;
    let with_text = denoiser.denoise(z_t, history, t, cond)?;
    Ok(cfg_combine(&uncond, &with_text, w))
}

/// Full reverse loop from unit Gaussian noise.
pub fn sample_window<D: Denoise + ?Sized>(
    denoiser: &D,
    history: &[f64],
    cond: &TextEmbedding,
    sched: &NoiseSchedule,
    guidance: &GuidanceConfig,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let z_t = gaussian(&mut rng, WINDOW_LEN * FRAME_DIM);
    sample_from(denoiser, z_t, history, cond, sched, guidance.w, &mut rng)
}

/// Reverse loop starting from an explicit `z_T` at the last schedule step.
pub fn sample_from<D: Denoise + ?Sized>(
    denoiser: &D,
    mut z: Vec<f64>,
    history: &[f64],
    cond: &TextEmbedding,
    sched: &NoiseSchedule,
    w: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    for t in (0..sched.steps()).rev() {
        let pred = guided_prediction(denoiser, &z, history, t, cond, w)?;
        if t == 0 {
            return Ok(pred);
        }
        let noise = gaussian(rng, z.len());
        z = posterior_step(&z, &pred, t, sched, &noise)?;
    }
    unreachable!("schedule has at least one step")
}
