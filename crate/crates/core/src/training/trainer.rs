//! Scheduled training: supervised windows first, then a linear hand-over
//! from ground-truth histories to the model's own rollouts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss_grad, LossBreakdown, LossInputs, LossWeights};
use crate::data::crop::{crop_windows, CropSample, EncodedRecord};
use crate::diffusion::{
    build_schedule, forward_diffuse, gaussian, sample_from, NoiseSchedule, ScheduleKind, DEFAULT_MASK_RATE,
    DEFAULT_STEPS,
};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::motion::clip::MotionClip;
use crate::motion::features::{
    canonicalize, detect_default_contacts, flatten, recover, CanonicalTransform, InteractionFrame, ReactorFrame,
    FIELD_THRESH, FRAME_DIM, HISTORY_LEN, REACTOR_DIM, WINDOW_LEN,
};
use crate::motion::normalize::FeatureNormalizer;
use crate::motion::skeleton::Skeleton;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::denoiser::{Denoiser, DenoiserConfig};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::text::{embed_text, TextEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub max_iters: usize,
    /// First iteration of phase 2 and of phase 3.
    pub phase_starts: [usize; 2],
    /// Consecutive windows per crop.
    pub windows: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self::new(30_000, 3, 8, 0)
    }
}

impl TrainPlan {
    /// Three equal phases.
    pub fn new(max_iters: usize, windows: usize, batch_size: usize, seed: u64) -> Self {
        Self { max_iters, phase_starts: [max_iters / 3, 2 * max_iters / 3], windows, batch_size, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.phase_starts;
        if a > b || b > self.max_iters {
            return Err(invalid(format!("phase boundaries {a}, {b} must be ordered and within {}", self.max_iters)));
        }
        if self.windows == 0 || self.batch_size == 0 {
            return Err(invalid("window count and batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn phase(&self, iter: usize) -> Phase {
        if iter < self.phase_starts[0] {
            Phase::Supervised
        } else if iter < self.phase_starts[1] {
            Phase::Mixed
        } else {
            Phase::Rollout
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Supervised,
    Mixed,
    Rollout,
}

/// Probability of keeping the ground-truth history at `iter`.
pub fn schedule_probability(iter: usize, plan: &TrainPlan) -> f64 {
    let [a, b] = plan.phase_starts;
    if iter < a {
        1.0
    } else if iter >= b {
        0.0
    } else {
        1.0 - (iter - a) as f64 / (b - a) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySource {
    /// The crop's first history, always taken from data.
    Initial,
    GroundTruth,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub plan: TrainPlan,
    pub weights: LossWeights,
    pub model: DenoiserConfig,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub mask_rate: f64,
    pub adam: AdamConfig,
    pub init_seed: u64,
    /// Save a checkpoint every this many iterations (0: never).
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            plan: TrainPlan::default(),
            weights: LossWeights::default(),
            model: DenoiserConfig::tiny(),
            schedule: ScheduleKind::Cosine,
            steps: DEFAULT_STEPS,
            mask_rate: DEFAULT_MASK_RATE,
            adam: AdamConfig::default(),
            init_seed: 0,
            checkpoint_every: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.weights.validate()?;
        self.model.validate()?;
        if self.steps == 0 {
            return Err(invalid("diffusion steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(invalid(format!("mask rate {} outside [0, 1]", self.mask_rate)));
        }
        if !(0.0..=1.0).contains(&self.adam.final_lr_fraction) {
            return Err(invalid("final learning-rate fraction must lie in [0, 1]"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: usize,
    pub total: f64,
    pub simple: f64,
    pub foot: f64,
    pub inter: f64,
    pub prefix: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub iter: usize,
    pub window: usize,
    pub source: HistorySource,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<CurveRow>,
    pub provenance: Vec<ProvenanceEntry>,
    /// Number of full sampling loops run for rollouts.
    pub rollout_calls: usize,
    pub mask_draws: usize,
    pub masked: usize,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainReport {
    pub fn mask_frequency(&self) -> f64 {
        if self.mask_draws == 0 {
            0.0
        } else {
            self.masked as f64 / self.mask_draws as f64
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "iter,total,simple,foot,inter,prefix,p")?;
        for r in &self.curve {
            writeln!(w, "{},{},{},{},{},{},{}", r.iter, r.total, r.simple, r.foot, r.inter, r.prefix, r.p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A crop being walked window by window. Its reactor clip is overwritten by
/// rollouts as training proceeds.
struct SampleState {
    crop: CropSample,
    reactor: MotionClip,
    contacts: Vec<[f64; 4]>,
    source: HistorySource,
}

fn mix_seed(seed: u64, iter: usize, index: usize, stream: u64) -> u64 {
    let mut x = seed ^ (iter as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= stream.wrapping_mul(0x1656_67B1_9E37_79F9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

struct StepOutput {
    loss: LossBreakdown,
    grads: Vec<f64>,
    masked: bool,
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub model: Denoiser,
    pub optimizer: Adam,
    pub schedule: NoiseSchedule,
    pub normalizer: FeatureNormalizer,
    pub execution: Execution,
    pub iteration: usize,
    records: &'a [EncodedRecord],
    skeleton: Skeleton,
    texts: Vec<TextEmbedding>,
    checkpoint_dir: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainConfig,
        records: &'a [EncodedRecord],
        normalizer: FeatureNormalizer,
        execution: Execution,
    ) -> Result<Self> {
        config.validate()?;
        normalizer.validate()?;
        let model = Denoiser::new(config.model, config.init_seed)?;
        Self::with_model(config, model, records, normalizer, execution)
    }

    pub fn with_model(
        config: TrainConfig,
        model: Denoiser,
        records: &'a [EncodedRecord],
        normalizer: FeatureNormalizer,
        execution: Execution,
    ) -> Result<Self> {
        config.validate()?;
        if model.config != config.model {
            return Err(invalid("model does not match the configured architecture"));
        }
        let schedule = build_schedule(config.steps, config.schedule)?;
        let optimizer = Adam::new(config.adam, model.params.len());
        let texts = records.iter().map(|r| embed_text(&r.record.label, config.model.text_embed_dim)).collect();
        Ok(Self {
            config,
            model,
            optimizer,
            schedule,
            normalizer,
            execution,
            iteration: 0,
            records,
            skeleton: Skeleton::smpl22(),
            texts,
            checkpoint_dir: None,
        })
    }

    pub fn checkpoint_into(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            &self.model,
            &self.normalizer,
            self.config.schedule,
            self.config.steps,
            self.iteration as u64,
            Some(&self.optimizer),
        )
    }

    fn normalized(&self, frames: &[InteractionFrame]) -> Result<Vec<f64>> {
        let mut flat = flatten(frames);
        self.normalizer.normalize_flat(&mut flat)?;
        Ok(flat)
    }

    /// History frames (physical units) feeding window `i` of `state`.
    fn history_frames(&self, state: &SampleState, i: usize) -> Result<Vec<InteractionFrame>> {
        if i == 0 {
            return Ok(state.crop.history.clone());
        }
        let start = state.crop.offset + i * WINDOW_LEN;
        match state.source {
            HistorySource::Rollout => {
                let rec = &self.records[state.crop.record];
                let (frames, _) = canonicalize(
                    &state.reactor,
                    &rec.record.actor,
                    start..start + HISTORY_LEN,
                    start,
                    &state.contacts,
                    &rec.contacts_actor,
                    &self.skeleton,
                    FIELD_THRESH,
                )?;
                Ok(frames)
            }
            _ => Ok(self.records[state.crop.record].features[start..start + HISTORY_LEN].to_vec()),
        }
    }

    fn sample_step(&self, state: &SampleState, history: &[f64], target: &[f64], b: usize) -> Result<StepOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.plan.seed, self.iteration, b, 0));
        let t = rng.random_range(0..self.schedule.steps());
        let noise = gaussian(&mut rng, target.len());
        let z_t = forward_diffuse(target, t, &noise, &self.schedule)?;
        let masked = rng.random::<f64>() < self.config.mask_rate;
        let text = &self.texts[state.crop.record];
        let text = if masked { text.to_null() } else { text.clone() };
        let cond = self.model.condition(t, &text);
        let (pred, tape) = self.model.forward_recorded(&z_t, history, &cond)?;
        let inputs = LossInputs {
            z0: target,
            z0_hat: &pred,
            history_last: &history[(HISTORY_LEN - 1) * FRAME_DIM..],
            normalizer: &self.normalizer,
            skeleton: &self.skeleton,
        };
        let (loss, dpred) = total_loss_grad(&inputs, &self.config.weights)?;
        let mut grads = self.model.params.zeros_like();
        if loss.is_finite() {
            self.model.backward(&tape, &dpred, &mut grads)?;
        }
        Ok(StepOutput { loss, grads, masked })
    }

    /// Maximum noising of the target followed by the full unguided reverse
    /// loop; returns predicted reactor poses for window `i`.
    fn rollout(&self, state: &SampleState, history: &[f64], target: &[f64], i: usize, b: usize) -> Result<MotionClip> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.plan.seed, self.iteration, b, 1));
        let last = self.schedule.steps() - 1;
        let noise = gaussian(&mut rng, target.len());
        let z = forward_diffuse(target, last, &noise, &self.schedule)?;
        let null = TextEmbedding::null(self.config.model.text_embed_dim);
        let mut pred = sample_from(&self.model, z, history, &null, &self.schedule, 1.0, &mut rng)?;
        self.normalizer.denormalize_flat(&mut pred)?;
        let mut hist = history.to_vec();
        self.normalizer.denormalize_flat(&mut hist)?;
        let frames: Vec<ReactorFrame> = hist
            .chunks_exact(FRAME_DIM)
            .chain(pred.chunks_exact(FRAME_DIM))
            .map(|f| ReactorFrame::read(&f[..REACTOR_DIM]))
            .collect();
        let start = state.crop.offset + i * WINDOW_LEN;
        let transform = CanonicalTransform::anchored_at(&state.reactor.frames[start]);
        let clip = recover(&frames, &transform, state.reactor.fps)?;
        Ok(clip.slice(HISTORY_LEN, HISTORY_LEN + WINDOW_LEN))
    }

    /// Runs until `plan.max_iters` optimizer steps have been taken.
    pub fn run(&mut self) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        let plan = self.config.plan;
        let mut crops = crop_windows(self.records, plan.windows, HISTORY_LEN, WINDOW_LEN, plan.seed)?;
        let trainable = self.model.params.trainable_mask();
        info!(
            "training {} parameters for {} iterations (phases start at {:?})",
            self.model.param_count(),
            plan.max_iters,
            plan.phase_starts
        );
        while self.iteration < plan.max_iters {
            let mut batch: Vec<SampleState> = (0..plan.batch_size)
                .map(|_| {
                    let crop = crops.next().expect("crop iterator is endless");
                    let rec = &self.records[crop.record];
                    SampleState {
                        reactor: rec.record.reactor.clone(),
                        contacts: rec.contacts_reactor.clone(),
                        crop,
                        source: HistorySource::Initial,
                    }
                })
                .collect();
            for i in 0..plan.windows {
                if self.iteration >= plan.max_iters {
                    break;
                }
                let p = schedule_probability(self.iteration, &plan);
                let mut inputs = Vec::with_capacity(batch.len());
                for s in &batch {
                    let source = if i == 0 { HistorySource::Initial } else { s.source };
                    report.provenance.push(ProvenanceEntry { iter: self.iteration, window: i, source });
                    let history = self.normalized(&self.history_frames(s, i)?)?;
                    let target = self.normalized(&s.crop.windows[i])?;
                    inputs.push((history, target));
                }

                let outputs = self.execution.map_range(batch.len(), |b| {
                    self.sample_step(&batch[b], &inputs[b].0, &inputs[b].1, b)
                });
                let mut grads = self.model.params.zeros_like();
                let mut mean = LossBreakdown::default();
                let scale = 1.0 / batch.len() as f64;
                for (b, out) in outputs.into_iter().enumerate() {
                    let out = out?;
                    if !out.loss.is_finite() {
                        let s = &batch[b].crop;
                        return Err(Error::Training {
                            iter: self.iteration,
                            detail: format!(
                                "non-finite loss {:?} on record {} offset {} window {i}",
                                out.loss, s.record, s.offset
                            ),
                        });
                    }
                    report.mask_draws += 1;
                    report.masked += out.masked as usize;
                    mean.add_scaled(&out.loss, scale);
                    grads.iter_mut().zip(&out.grads).for_each(|(g, o)| *g += o * scale);
                }
                self.optimizer.update(&mut self.model.params.data, &mut grads, &trainable, self.iteration)?;
                report.curve.push(CurveRow {
                    iter: self.iteration,
                    total: mean.total,
                    simple: mean.simple,
                    foot: mean.foot,
                    inter: mean.inter,
                    prefix: mean.prefix,
                    p,
                });
                if self.config.log_every > 0 && self.iteration % self.config.log_every == 0 {
                    info!(
                        "iter {} p {:.3} total {:.5} simple {:.5} foot {:.5} inter {:.5} prefix {:.5}",
                        self.iteration, p, mean.total, mean.simple, mean.foot, mean.inter, mean.prefix
                    );
                }

                // The last window's rollout would never be consumed.
                if i + 1 < plan.windows {
                    let decisions: Vec<bool> = (0..batch.len())
                        .map(|b| {
                            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(plan.seed, self.iteration, b, 2));
                            rng.random::<f64>() >= p
                        })
                        .collect();
                    let chosen: Vec<usize> = (0..batch.len()).filter(|&b| decisions[b]).collect();
                    let rolled = self.execution.map(&chosen, |&b| {
                        self.rollout(&batch[b], &inputs[b].0, &inputs[b].1, i, b)
                    });
                    report.rollout_calls += chosen.len();
                    for (b, clip) in chosen.iter().zip(rolled) {
                        let clip = clip?;
                        let s = &mut batch[*b];
                        let range = s.crop.window_range(i, HISTORY_LEN, WINDOW_LEN);
                        s.reactor.frames[range].clone_from_slice(&clip.frames);
                        s.contacts = detect_default_contacts(&s.reactor, &self.skeleton)?;
                    }
                    for (b, s) in batch.iter_mut().enumerate() {
                        s.source = if decisions[b] { HistorySource::Rollout } else { HistorySource::GroundTruth };
                    }
                }
                self.iteration += 1;
                if let Some(dir) = &self.checkpoint_dir {
                    let every = self.config.checkpoint_every;
                    if every > 0 && self.iteration % every == 0 {
                        let path = dir.join(format!("checkpoint_{:06}.json", self.iteration));
                        self.checkpoint().save(&path)?;
                        debug!("saved {}", path.display());
                        report.checkpoints.push(path);
                    }
                }
            }
        }
        Ok(report)
    }
}

/// Mean simple loss over a fixed evaluation set: for every record, windows
/// at `offsets_per_record` evenly spaced positions, every diffusion step,
/// ground-truth histories and seeded noise.
pub fn evaluate_simple_loss(
    model: &Denoiser,
    records: &[EncodedRecord],
    normalizer: &FeatureNormalizer,
    schedule: &NoiseSchedule,
    offsets_per_record: usize,
    seed: u64,
    execution: Execution,
) -> Result<f64> {
    let mut jobs = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        let len = rec.features.len();
        if len < HISTORY_LEN + WINDOW_LEN {
            continue;
        }
        let span = len - HISTORY_LEN - WINDOW_LEN;
        for o in 0..offsets_per_record.max(1) {
            let offset = if offsets_per_record <= 1 { 0 } else { span * o / (offsets_per_record - 1) };
            for t in 0..schedule.steps() {
                jobs.push((r, offset, t));
            }
        }
    }
    if jobs.is_empty() {
        return Err(invalid("no record is long enough to evaluate"));
    }
    let losses = execution.map(&jobs, |&(r, offset, t)| -> Result<f64> {
        let rec = &records[r];
        let mut history = flatten(&rec.features[offset..offset + HISTORY_LEN]);
        normalizer.normalize_flat(&mut history)?;
        let start = offset + HISTORY_LEN;
        let mut target = flatten(&rec.features[start..start + WINDOW_LEN]);
        normalizer.normalize_flat(&mut target)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, offset, r, t as u64));
        let noise = gaussian(&mut rng, target.len());
        let z_t = forward_diffuse(&target, t, &noise, schedule)?;
        let text = embed_text(&rec.record.label, model.config.text_embed_dim);
        let pred = model.forward(&z_t, &history, &model.condition(t, &text))?;
        super::loss::loss_simple(&target, &pred)
    });
    let n = losses.len() as f64;
    losses.into_iter().try_fold(0.0, |acc, l| l.map(|l| acc + l / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_is_piecewise_linear() {
        let plan = TrainPlan { max_iters: 300, phase_starts: [100, 200], windows: 3, batch_size: 1, seed: 0 };
        assert_eq!(schedule_probability(0, &plan), 1.0);
        assert_eq!(schedule_probability(99, &plan), 1.0);
        assert_eq!(schedule_probability(100, &plan), 1.0);
        assert_eq!(schedule_probability(150, &plan), 0.5);
        assert!((schedule_probability(125, &plan) - 0.75).abs() < 1e-15);
        assert_eq!(schedule_probability(200, &plan), 0.0);
        assert_eq!(schedule_probability(10_000, &plan), 0.0);
        assert_eq!(plan.phase(150), Phase::Mixed);
    }

    #[test]
    fn plan_validation() {
        let mut plan = TrainPlan::new(90, 3, 2, 0);
        assert_eq!(plan.phase_starts, [30, 60]);
        assert!(plan.validate().is_ok());
        plan.phase_starts = [70, 60];
        assert!(plan.validate().is_err());
        plan = TrainPlan::new(90, 0, 2, 0);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = TrainConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: TrainConfig = toml::from_str("steps = 4\n[plan]\nmax_iters = 9\nphase_starts = [3, 6]\nwindows = 2\nbatch_size = 1\nseed = 5\n").unwrap();
        assert_eq!(partial.steps, 4);
        assert_eq!(partial.weights, LossWeights::default());
    }
}
