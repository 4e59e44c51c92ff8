//! Online reaction planning: buffer the streamed actor, repeatedly sample
//! the next reactor window from the latest interaction history and append
//! it to the reactor trajectory.

pub mod stream;
pub mod wire;


use crate::diffusion::{build_schedule, sample_window, GuidanceConfig, NoiseSchedule};
use crate::error::{invalid, Error, Result};
use crate::motion::clip::{AgentId, GlobalPose, MotionClip, DEFAULT_FPS};
use crate::motion::features::{
    canonicalize, detect_default_contacts, flatten, recover, ActorFrame, CanonicalTransform, InteractionFrame,
    ReactorFrame, FIELD_THRESH, FRAME_DIM, HISTORY_LEN, REACTOR_DIM, WINDOW_LEN,
};
use crate::motion::normalize::FeatureNormalizer;
use crate::motion::skeleton::Skeleton;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::denoiser::Denoiser;
use crate::nn::text::{embed_text, TextEmbedding};

pub use stream::{run_stream, ClipSource, LatencyStats, Pacing, PipelineMode, RunReport, StreamConfig, VecSink};
pub use wire::{LineSink, LineSource, WireFrame};

/// Actor frames buffered before the first window is planned (one second).
pub const WARMUP_FRAMES: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFrame {
    pub t: u64,
    pub pose: GlobalPose,
    pub text: Option<String>,
}

pub trait ActorSource {
    /// `Ok(None)` marks the end of the stream.
    fn next_frame(&mut self) -> Result<Option<StreamFrame>>;
}

pub trait ReactorSink {
    fn emit(&mut self, frame: &StreamFrame) -> Result<()>;
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// How the reactor buffer is filled during warm-up.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WarmupInit {
    /// A window sampled without text from a rest-pose history.
    #[default]
    Unconditioned,
    RestPose,
    /// Caller-supplied reactor poses, one per warm-up frame.
    Provided(Vec<GlobalPose>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub init: WarmupInit,
    pub seed: u64,
    /// Initial text; `None` plans unconditioned until a text update arrives.
    pub text: Option<String>,
    pub rest_root: [f64; 2],
    pub rest_yaw: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { init: WarmupInit::default(), seed: 0, text: None, rest_root: [0.0, 0.0], rest_yaw: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerState {
    pub reactor: Vec<GlobalPose>,
    pub actor: Vec<GlobalPose>,
    pub label: Option<String>,
    pub text: TextEmbedding,
    /// Timestamp of the last actor frame received.
    pub clock: Option<u64>,
    pub window: usize,
    pub seed: u64,
}

impl PlannerState {
    /// Text changes apply from the next planned window.
    pub fn set_text(&mut self, label: Option<&str>) {
        let dim = self.text.dim();
        self.label = label.map(str::to_string);
        self.text = match label {
            Some(l) => embed_text(l, dim),
            None => TextEmbedding::null(dim),
        };
    }

    pub fn push_actor(&mut self, frame: &StreamFrame) -> Result<()> {
        if let Some(c) = self.clock {
            if frame.t <= c {
                return Err(invalid(format!("timestamp {} does not follow {c}", frame.t)));
            }
        }
        self.clock = Some(frame.t);
        self.actor.push(frame.pose.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlannedWindow {
    pub window: usize,
    /// Buffer index of the first generated frame.
    pub start_frame: usize,
    pub reactor: Vec<GlobalPose>,
    /// Predicted actor features (canonical, physical units).
    pub actor_prediction: Vec<ActorFrame>,
    /// Full generated window in physical units.
    pub features: Vec<InteractionFrame>,
    /// Mean joint distance between the first generated frame and the last
    /// buffered one.
    pub boundary_gap: f64,
}

fn window_seed(seed: u64, window: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(window as u64).rotate_left(17) ^ 0xD6E8_FEB8_6659_FD93
}

#[derive(Debug, Clone)]
pub struct Planner {
    pub model: Denoiser,
    pub normalizer: FeatureNormalizer,
    pub schedule: NoiseSchedule,
    pub guidance: GuidanceConfig,
    pub skeleton: Skeleton,
}

impl Planner {
    pub fn new(
        model: Denoiser,
        normalizer: FeatureNormalizer,
        schedule: NoiseSchedule,
        guidance: GuidanceConfig,
    ) -> Result<Self> {
        normalizer.validate()?;
        guidance.validate()?;
        Ok(Self { model, normalizer, schedule, guidance, skeleton: Skeleton::smpl22() })
    }

    /// Uses the checkpoint's schedule kind with `steps` steps (or the
    /// trained count when `None`).
    pub fn from_checkpoint(ck: &Checkpoint, steps: Option<usize>, guidance: GuidanceConfig) -> Result<Self> {
        let schedule = build_schedule(steps.unwrap_or(ck.steps), ck.schedule_kind)?;
        Self::new(ck.model()?, ck.normalizer.clone(), schedule, guidance)
    }

    /// Reads [`WARMUP_FRAMES`] actor frames and initializes the reactor buffer.
    pub fn warmup(&self, source: &mut dyn ActorSource, config: &PlannerConfig) -> Result<PlannerState> {
        let mut frames = Vec::with_capacity(WARMUP_FRAMES);
        while frames.len() < WARMUP_FRAMES {
            match source.next_frame()? {
                Some(f) => frames.push(f),
                None => return Err(Error::StreamExhausted { received: frames.len(), needed: WARMUP_FRAMES }),
            }
        }
        self.warmup_from(&frames, config)
    }

    pub fn warmup_from(&self, frames: &[StreamFrame], config: &PlannerConfig) -> Result<PlannerState> {
        if frames.len() < WARMUP_FRAMES {
            return Err(Error::StreamExhausted { received: frames.len(), needed: WARMUP_FRAMES });
        }
        let dim = self.model.config.text_embed_dim;
        let mut state = PlannerState {
            reactor: Vec::new(),
            actor: Vec::new(),
            label: None,
            text: TextEmbedding::null(dim),
            clock: None,
            window: 0,
            seed: config.seed,
        };
        state.set_text(config.text.as_deref());
        for f in &frames[..WARMUP_FRAMES] {
            state.push_actor(f)?;
            if let Some(t) = &f.text {
                state.set_text(Some(t));
            }
        }
        let rest = GlobalPose::rest(&self.skeleton, config.rest_root, config.rest_yaw);
        state.reactor = match &config.init {
            WarmupInit::RestPose => vec![rest; WARMUP_FRAMES],
            WarmupInit::Provided(p) => {
                if p.len() != WARMUP_FRAMES {
                    return Err(invalid(format!("provided prefix has {} frames, need {WARMUP_FRAMES}", p.len())));
                }
                p.clone()
            }
            WarmupInit::Unconditioned => self.unconditioned_prefix(&state, rest)?,
        };
        Ok(state)
    }

    fn unconditioned_prefix(&self, state: &PlannerState, rest: GlobalPose) -> Result<Vec<GlobalPose>> {
        let reactor = vec![rest; WARMUP_FRAMES];
        let probe = PlannerState { reactor, text: TextEmbedding::null(state.text.dim()), ..state.clone() };
        let (history, transform) = self.history_features(&probe)?;
        let mut hist = flatten(&history);
        self.normalizer.normalize_flat(&mut hist)?;
        let null = TextEmbedding::null(state.text.dim());
        let mut pred = sample_window(
            &self.model,
            &hist,
            &null,
            &self.schedule,
            &self.guidance,
            window_seed(state.seed, usize::MAX),
        )?;
        self.normalizer.denormalize_flat(&mut pred)?;
        let clip = self.recover_window(&history, &pred, &transform)?;
        Ok(clip.frames[clip.len() - WARMUP_FRAMES..].to_vec())
    }

    /// Canonical features of the last `h` buffered frames of both agents and
    /// the transform anchored at the first of them.
    pub fn history_features(&self, state: &PlannerState) -> Result<(Vec<InteractionFrame>, CanonicalTransform)> {
        let n = state.reactor.len();
        if n < HISTORY_LEN {
            return Err(Error::State(format!("reactor buffer has {n} frames, need {HISTORY_LEN}")));
        }
        if state.actor.len() < n {
            return Err(Error::State("actor buffer is behind the reactor buffer".into()));
        }
        // one extra leading frame so the first history velocity is a backward difference
        let lead = usize::from(n > HISTORY_LEN);
        let from = n - HISTORY_LEN - lead;
        let reactor = MotionClip::new(DEFAULT_FPS, AgentId::Reactor, state.reactor[from..n].to_vec());
        let actor = MotionClip::new(DEFAULT_FPS, AgentId::Actor, state.actor[from..n].to_vec());
        let cx = detect_default_contacts(&reactor, &self.skeleton)?;
        let cy = detect_default_contacts(&actor, &self.skeleton)?;
        canonicalize(&reactor, &actor, lead..lead + HISTORY_LEN, lead, &cx, &cy, &self.skeleton, FIELD_THRESH)
    }

    fn recover_window(
        &self,
        history: &[InteractionFrame],
        pred: &[f64],
        transform: &CanonicalTransform,
    ) -> Result<MotionClip> {
        let frames: Vec<ReactorFrame> = history
            .iter()
            .map(|f| f.reactor())
            .chain(pred.chunks_exact(FRAME_DIM).map(|f| ReactorFrame::read(&f[..REACTOR_DIM])))
            .collect();
        let clip = recover(&frames, transform, DEFAULT_FPS)?;
        Ok(clip.slice(HISTORY_LEN, HISTORY_LEN + WINDOW_LEN))
    }

    /// Samples the next `k` reactor frames and appends them to the buffer.
    pub fn plan_next_window(&self, state: &mut PlannerState) -> Result<PlannedWindow> {
        let (history, transform) = self.history_features(state)?;
        let mut hist = flatten(&history);
        self.normalizer.normalize_flat(&mut hist)?;
        let mut pred = sample_window(
            &self.model,
            &hist,
            &state.text,
            &self.schedule,
            &self.guidance,
            window_seed(state.seed, state.window),
        )?;
        self.normalizer.denormalize_flat(&mut pred)?;
        let clip = self.recover_window(&history, &pred, &transform)?;
        let last = state.reactor.last().expect("history checked");
        let boundary_gap = clip.frames[0].mean_joint_distance(last);
        let features = pred
            .chunks_exact(FRAME_DIM)
            .map(InteractionFrame::from_slice)
            .collect::<Result<Vec<_>>>()?;
        let actor_prediction = features.iter().map(|f| f.actor()).collect();
        let start_frame = state.reactor.len();
        state.reactor.extend(clip.frames.iter().cloned());
        let window = state.window;
        state.window += 1;
        Ok(PlannedWindow { window, start_frame, reactor: clip.frames, actor_prediction, features, boundary_gap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;
    use crate::nn::denoiser::DenoiserConfig;

    fn planner() -> Planner {
        let cfg = DenoiserConfig { layers: 1, hidden: 16, heads: 2, time_embed_dim: 8, text_embed_dim: 8, ff_mult: 2 };
        Planner::new(
            Denoiser::new(cfg, 1).unwrap(),
            FeatureNormalizer::identity(),
            build_schedule(4, ScheduleKind::Cosine).unwrap(),
            GuidanceConfig::default(),
        )
        .unwrap()
    }

    fn actor_frames(n: usize) -> Vec<StreamFrame> {
        let sk = Skeleton::smpl22();
        (0..n)
            .map(|i| StreamFrame { t: i as u64, pose: GlobalPose::rest(&sk, [1.0, 0.01 * i as f64], 3.0), text: None })
            .collect()
    }

    #[test]
    fn warmup_counts() {
        let p = planner();
        let cfg = PlannerConfig { init: WarmupInit::RestPose, ..Default::default() };
        let s = p.warmup_from(&actor_frames(30), &cfg).unwrap();
        assert_eq!(s.window, 0);
        assert_eq!(s.actor.len(), 30);
        let rest = GlobalPose::rest(&p.skeleton, [0.0, 0.0], 0.0);
        assert!(s.reactor.iter().all(|f| *f == rest));
        let mut src = ClipSource::from_frames(actor_frames(29));
        assert!(matches!(p.warmup(&mut src, &cfg), Err(Error::StreamExhausted { received: 29, needed: 30 })));
    }

    #[test]
    fn unconditioned_warmup_fills_buffer() {
        let p = planner();
        let s = p.warmup_from(&actor_frames(30), &PlannerConfig::default()).unwrap();
        assert_eq!(s.reactor.len(), 30);
        assert!(s.reactor.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn planning_is_deterministic_and_grows_buffer() {
        let p = planner();
        let cfg = PlannerConfig { init: WarmupInit::RestPose, seed: 3, text: Some("wave".into()), ..Default::default() };
        let mut a = p.warmup_from(&actor_frames(30), &cfg).unwrap();
        let extra = actor_frames(70);
        for f in &extra[30..] {
            a.push_actor(f).unwrap();
        }
        let mut b = a.clone();
        let wa = p.plan_next_window(&mut a).unwrap();
        let wb = p.plan_next_window(&mut b).unwrap();
        assert_eq!(wa.reactor, wb.reactor);
        assert_eq!(a.reactor.len(), 30 + WINDOW_LEN);
        assert_eq!(wa.start_frame, 30);
        assert_eq!(wa.actor_prediction.len(), WINDOW_LEN);
        assert!(wa.boundary_gap.is_finite());
        let expect = wa.reactor[0].mean_joint_distance(&a.reactor[29]);
        assert_eq!(wa.boundary_gap, expect);
    }

    #[test]
    fn timestamps_must_increase() {
        let p = planner();
        let mut frames = actor_frames(30);
        frames[10].t = 9;
        let cfg = PlannerConfig { init: WarmupInit::RestPose, ..Default::default() };
        assert!(p.warmup_from(&frames, &cfg).is_err());
    }
}
