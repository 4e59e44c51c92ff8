use duet_core::data::{synth_generate, Scenario};
use duet_core::diffusion::{build_schedule, GuidanceConfig, ScheduleKind};
use duet_core::motion::FeatureNormalizer;
use duet_core::nn::{Denoiser, DenoiserConfig};
use duet_core::planner::{
    run_stream, ClipSource, LineSink, LineSource, PipelineMode, Planner, PlannerConfig, ReactorSink, StreamConfig,
    StreamFrame, VecSink, WarmupInit, WireFrame, WARMUP_FRAMES,
};
use duet_core::{Error, Result};

fn planner() -> Planner {
    let cfg = DenoiserConfig { layers: 1, hidden: 16, heads: 2, time_embed_dim: 8, text_embed_dim: 8, ff_mult: 2 };
    Planner::new(
        Denoiser::new(cfg, 5).unwrap(),
        FeatureNormalizer::identity(),
        build_schedule(3, ScheduleKind::Cosine).unwrap(),
        GuidanceConfig::default(),
    )
    .unwrap()
}

fn config(pipeline: PipelineMode) -> StreamConfig {
    StreamConfig {
        planner: PlannerConfig { init: WarmupInit::RestPose, seed: 4, text: Some("mirror".into()), ..Default::default() },
        pipeline,
        max_windows: Some(3),
        ..Default::default()
    }
}

#[test]
fn threaded_pipeline_matches_sequential() {
    let p = planner();
    let rec = synth_generate(Scenario::Mirror, 200, 1).unwrap();
    let mut a = VecSink::default();
    let ra = run_stream(&p, &mut ClipSource::new(&rec.actor, None), &mut a, &config(PipelineMode::Sequential)).unwrap();
    let mut b = VecSink::default();
    let rb = run_stream(
        &p,
        &mut ClipSource::new(&rec.actor, None),
        &mut b,
        &config(PipelineMode::Threaded { capacity: 2 }),
    )
    .unwrap();
    assert_eq!(ra.windows, 3);
    assert_eq!(rb.windows, 3);
    assert_eq!(a.frames, b.frames);
    assert_eq!(ra.boundary_gaps, rb.boundary_gaps);
    assert_eq!(a.frames.first().map(|f| f.t), Some(WARMUP_FRAMES as u64));
}

#[test]
fn stream_stops_when_actor_ends() {
    let p = planner();
    let rec = synth_generate(Scenario::Follow, 125, 2).unwrap();
    let mut sink = VecSink::default();
    let cfg = StreamConfig { max_windows: None, ..config(PipelineMode::Sequential) };
    let report = run_stream(&p, &mut ClipSource::new(&rec.actor, None), &mut sink, &cfg).unwrap();
    assert_eq!(report.windows, 2);
    assert_eq!(report.emitted_frames, 80);
    assert!(report.error.is_none());
}

#[test]
fn short_stream_reports_exhaustion() {
    let p = planner();
    let rec = synth_generate(Scenario::Mirror, 60, 2).unwrap();
    let mut src = ClipSource::new(&rec.actor.slice(0, 10), None);
    let err = run_stream(&p, &mut src, &mut VecSink::default(), &config(PipelineMode::Sequential)).unwrap_err();
    assert!(matches!(err, Error::StreamExhausted { received: 10, needed: 30 }));
}

struct FailingSink {
    accepted: usize,
}

impl ReactorSink for FailingSink {
    fn emit(&mut self, _frame: &StreamFrame) -> Result<()> {
        if self.accepted == 5 {
            return Err(Error::Sink("consumer went away".into()));
        }
        self.accepted += 1;
        Ok(())
    }
}

#[test]
fn sink_failure_is_reported() {
    let p = planner();
    let rec = synth_generate(Scenario::Mirror, 200, 1).unwrap();
    for mode in [PipelineMode::Sequential, PipelineMode::Threaded { capacity: 1 }] {
        let mut sink = FailingSink { accepted: 0 };
        let report = run_stream(&p, &mut ClipSource::new(&rec.actor, None), &mut sink, &config(mode)).unwrap();
        assert_eq!(sink.accepted, 5);
        assert!(report.error.as_deref().is_some_and(|e| e.contains("consumer went away")));
    }
}

#[test]
fn wire_stream_is_deterministic() {
    let p = planner();
    let rec = synth_generate(Scenario::Mirror, 120, 3).unwrap();
    let input: String = rec
        .actor
        .frames
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let f = StreamFrame { t: i as u64, pose: pose.clone(), text: None };
            serde_json::to_string(&WireFrame::from_frame(&f)).unwrap() + "\n"
        })
        .collect();
    let run = || {
        let mut src = LineSource::new(input.as_bytes());
        let mut sink = LineSink::new(Vec::new());
        run_stream(&p, &mut src, &mut sink, &config(PipelineMode::Sequential)).unwrap();
        sink.into_inner()
    };
    let a = run();
    assert!(!a.is_empty());
    assert_eq!(a, run());
}
