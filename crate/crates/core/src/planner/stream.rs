//! The streaming loop: collect `k` actor frames, plan, emit `k` reactor
//! frames. Runs in one context or as ingest / plan / emit stages joined by
//! bounded queues; both produce identical output.

use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::Serialize;

use super::{ActorSource, PlannedWindow, Planner, PlannerConfig, PlannerState, ReactorSink, StreamFrame};
use crate::error::{Error, Result};
use crate::motion::clip::{GlobalPose, MotionClip, DEFAULT_FPS};
use crate::motion::features::WINDOW_LEN;

/// Replays a recorded clip as an actor stream.
#[derive(Debug, Clone)]
pub struct ClipSource {
    frames: Vec<StreamFrame>,
    next: usize,
}

impl ClipSource {
    /// `text`, if given, is attached to the first frame.
    pub fn new(clip: &MotionClip, text: Option<&str>) -> Self {
        let frames = clip
            .frames
            .iter()
            .enumerate()
            .map(|(i, p)| StreamFrame { t: i as u64, pose: p.clone(), text: (i == 0).then(|| text.map(str::to_string)).flatten() })
            .collect();
        Self { frames, next: 0 }
    }

    pub fn from_frames(frames: Vec<StreamFrame>) -> Self {
        Self { frames, next: 0 }
    }
}

impl ActorSource for ClipSource {
    fn next_frame(&mut self) -> Result<Option<StreamFrame>> {
        let f = self.frames.get(self.next).cloned();
        self.next += 1;
        Ok(f)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VecSink {
    pub frames: Vec<StreamFrame>,
}

impl ReactorSink for VecSink {
    fn emit(&mut self, frame: &StreamFrame) -> Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }
}

impl VecSink {
    pub fn poses(&self) -> Vec<GlobalPose> {
        self.frames.iter().map(|f| f.pose.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    /// Emit at the clip frame rate.
    Realtime,
    /// Emit as fast as planning allows.
    #[default]
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipelineMode {
    /// Everything on the calling thread.
    #[default]
    Sequential,
    /// Ingest, plan and emit stages connected by queues of `capacity`.
    Threaded { capacity: usize },
}

#[derive(Debug, Clone, Default)]
pub struct StreamConfig {
    pub planner: PlannerConfig,
    pub pacing: Pacing,
    pub pipeline: PipelineMode,
    pub max_windows: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub windows: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Self {
            windows: ms.len(),
            min_ms: sorted[0],
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p95_ms: sorted[rank - 1],
            max_ms: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub windows: usize,
    pub emitted_frames: usize,
    pub latency: LatencyStats,
    pub latencies_ms: Vec<f64>,
    pub boundary_gaps: Vec<f64>,
    pub mean_boundary_gap: f64,
    /// Set when the run stopped early because of a sink failure.
    pub error: Option<String>,
}

impl RunReport {
    fn finish(&mut self) {
        self.latency = LatencyStats::from_samples(&self.latencies_ms);
        self.mean_boundary_gap = if self.boundary_gaps.is_empty() {
            0.0
        } else {
            self.boundary_gaps.iter().sum::<f64>() / self.boundary_gaps.len() as f64
        };
    }

    fn record(&mut self, w: &PlannedWindow, elapsed: Duration) {
        self.windows += 1;
        self.latencies_ms.push(elapsed.as_secs_f64() * 1e3);
        self.boundary_gaps.push(w.boundary_gap);
    }
}

fn window_frames(w: &PlannedWindow) -> Vec<StreamFrame> {
    w.reactor
        .iter()
        .enumerate()
        .map(|(j, p)| StreamFrame { t: (w.start_frame + j) as u64, pose: p.clone(), text: None })
        .collect()
}

struct Pacer {
    start: Instant,
    sent: usize,
    realtime: bool,
}

impl Pacer {
    fn wait(&mut self) {
        if self.realtime {
            let due = self.start + Duration::from_secs_f64(self.sent as f64 / DEFAULT_FPS);
            if let Some(d) = due.checked_duration_since(Instant::now()) {
                thread::sleep(d);
            }
        }
        self.sent += 1;
    }
}

/// Pulls up to `k` frames into the state; returns false when the stream
/// ended first. Text updates take effect for the next planned window.
fn collect_window(state: &mut PlannerState, next: &mut dyn FnMut() -> Result<Option<StreamFrame>>) -> Result<bool> {
    for got in 0..WINDOW_LEN {
        match next()? {
            Some(f) => {
                state.push_actor(&f)?;
                if let Some(t) = &f.text {
                    state.set_text(Some(t));
                }
            }
            None => {
                if got > 0 {
                    warn!("stream ended mid-window after {got} of {WINDOW_LEN} frames");
                }
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn window_limit(config: &StreamConfig, done: usize) -> bool {
    config.max_windows.is_some_and(|m| done >= m)
}

pub fn run_stream<S, K>(planner: &Planner, source: &mut S, sink: &mut K, config: &StreamConfig) -> Result<RunReport>
where
    S: ActorSource + Send,
    K: ReactorSink + Send,
{
    let report = match config.pipeline {
        PipelineMode::Sequential => run_sequential(planner, source, sink, config)?,
        PipelineMode::Threaded { capacity } => run_threaded(planner, source, sink, config, capacity.max(1))?,
    };
    info!(
        "streamed {} windows ({} frames); latency p95 {:.1} ms, mean gap {:.4} m",
        report.windows, report.emitted_frames, report.latency.p95_ms, report.mean_boundary_gap
    );
    Ok(report)
}

fn run_sequential<S: ActorSource, K: ReactorSink>(
    planner: &Planner,
    source: &mut S,
    sink: &mut K,
    config: &StreamConfig,
) -> Result<RunReport> {
    let mut state = planner.warmup(source, &config.planner)?;
    let mut report = RunReport::default();
    let mut pacer = Pacer { start: Instant::now(), sent: 0, realtime: config.pacing == Pacing::Realtime };
    while !window_limit(config, report.windows) && collect_window(&mut state, &mut || source.next_frame())? {
        let t0 = Instant::now();
        let w = planner.plan_next_window(&mut state)?;
        report.record(&w, t0.elapsed());
        for f in window_frames(&w) {
            pacer.wait();
            if let Err(e) = sink.emit(&f) {
                report.error = Some(e.to_string());
                report.finish();
                return Ok(report);
            }
            report.emitted_frames += 1;
        }
    }
    if let Err(e) = sink.flush() {
        report.error = Some(e.to_string());
    }
    report.finish();
    Ok(report)
}

fn run_threaded<S, K>(
    planner: &Planner,
    source: &mut S,
    sink: &mut K,
    config: &StreamConfig,
    capacity: usize,
) -> Result<RunReport>
where
    S: ActorSource + Send,
    K: ReactorSink + Send,
{
    let mut state = planner.warmup(source, &config.planner)?;
    let realtime = config.pacing == Pacing::Realtime;
    thread::scope(|scope| {
        let (in_tx, in_rx) = sync_channel::<Result<StreamFrame>>(capacity * WINDOW_LEN);
        let (out_tx, out_rx) = sync_channel::<Vec<StreamFrame>>(capacity);

        scope.spawn(move || loop {
            match source.next_frame() {
                Ok(Some(f)) => {
                    if in_tx.send(Ok(f)).is_err() {
                        return;
                    }
                }
                Ok(None) => return,
                Err(e) => {
                    let _ = in_tx.send(Err(e));
                    return;
                }
            }
        });

        let emitter = scope.spawn(move || -> (usize, Option<String>) {
            let mut pacer = Pacer { start: Instant::now(), sent: 0, realtime };
            let mut emitted = 0;
            for batch in out_rx.iter() {
                for f in &batch {
                    pacer.wait();
                    if let Err(e) = sink.emit(f) {
                        return (emitted, Some(e.to_string()));
                    }
                    emitted += 1;
                }
            }
            (emitted, sink.flush().err().map(|e| e.to_string()))
        });

        let mut report = RunReport::default();
        let planned: Result<()> = (|| {
            let mut next = || recv_frame(&in_rx);
            while !window_limit(config, report.windows) && collect_window(&mut state, &mut next)? {
                let t0 = Instant::now();
                let w = planner.plan_next_window(&mut state)?;
                report.record(&w, t0.elapsed());
                if out_tx.send(window_frames(&w)).is_err() {
                    break;
                }
            }
            Ok(())
        })();
        drop(out_tx);
        drop(in_rx);
        let (emitted, sink_error) = emitter.join().map_err(|_| Error::Sink("emitter thread panicked".into()))?;
        planned?;
        report.emitted_frames = emitted;
        report.error = sink_error;
        report.finish();
        Ok(report)
    })
}

fn recv_frame(rx: &Receiver<Result<StreamFrame>>) -> Result<Option<StreamFrame>> {
    match rx.recv() {
        Ok(f) => f.map(Some),
        Err(_) => Ok(None),
    }
}
