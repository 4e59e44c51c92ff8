use std::fs;
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::Path;

use duet_core::data::{load_dataset, synth_generate, write_dataset, EncodedRecord, InteractionRecord};
use duet_core::diffusion::GuidanceConfig;
use duet_core::metrics::{evaluate, write_window_csv, EvalSample, JointRadii};
use duet_core::motion::clip::{AgentId, MotionClip};
use duet_core::motion::Skeleton;
use duet_core::nn::{Checkpoint, DenoiserConfig};
use duet_core::planner::{
    run_stream, ClipSource, LineSink, LineSource, Pacing, PipelineMode, Planner, PlannerConfig, RunReport,
    StreamConfig, VecSink, WarmupInit, WARMUP_FRAMES,
};
use duet_core::training::{TrainPlan, Trainer};
use duet_core::{Error, Execution, Result};
use log::info;

use crate::config::{RunConfig, SampleSettings};
use crate::{Cli, Command, EvaluateArgs, GenDataArgs, InspectArgs, PlanArgs, SampleArgs, StreamArgs, TrainArgs};

fn usage(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let exec = if cli.deterministic { Execution::Sequential } else { Execution::Parallel };
    match &cli.command {
        Command::GenData(a) => gen_data(&mut cfg, a),
        Command::Train(a) => train(&mut cfg, a, exec),
        Command::Sample(a) => sample(&mut cfg, a, exec),
        Command::Stream(a) => stream(&mut cfg, a, cli.deterministic),
        Command::Evaluate(a) => evaluate_cmd(&mut cfg, a, exec),
        Command::Inspect(a) => inspect(a),
    }
}

fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn gen_data(cfg: &mut RunConfig, a: &GenDataArgs) -> Result<()> {
    let g = &mut cfg.gen_data;
    set(&mut g.scenario, &a.scenario);
    set(&mut g.clips, &a.clips);
    set(&mut g.frames, &a.frames);
    set(&mut g.seed, &a.seed);
    if g.clips == 0 {
        return Err(usage("--clips must be at least 1"));
    }
    let mut records = Vec::new();
    for scenario in g.scenarios()? {
        for i in 0..g.clips {
            records.push(synth_generate(scenario, g.frames, g.seed.wrapping_add(i as u64))?);
        }
    }
    write_dataset(&a.out, &records)?;
    cfg.echo_into(&a.out)?;
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn train(cfg: &mut RunConfig, a: &TrainArgs, exec: Execution) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(iters) = a.iters {
        let keep = t.plan;
        t.plan = TrainPlan::new(iters, keep.windows, keep.batch_size, keep.seed);
    }
    set(&mut t.plan.batch_size, &a.batch);
    set(&mut t.plan.windows, &a.windows);
    set(&mut t.plan.seed, &a.seed);
    set(&mut t.plan.phase_starts[0], &a.phase2);
    set(&mut t.plan.phase_starts[1], &a.phase3);
    set(&mut t.adam.lr, &a.lr);
    if let Some(f) = a.lr_final {
        t.adam.final_lr_fraction = f;
        t.adam.decay_steps = t.plan.max_iters as u64;
    }
    set(&mut t.steps, &a.steps);
    set(&mut t.mask_rate, &a.mask_rate);
    set(&mut t.weights.foot, &a.lambda_foot);
    set(&mut t.weights.inter, &a.lambda_inter);
    set(&mut t.weights.prefix, &a.lambda_prefix);
    set(&mut t.init_seed, &a.init_seed);
    set(&mut t.checkpoint_every, &a.checkpoint_every);
    match a.profile.as_deref() {
        None => {}
        Some("tiny") => t.model = DenoiserConfig::tiny(),
        Some("full") => t.model = DenoiserConfig::full(),
        Some(other) => return Err(usage(format!("unknown profile {other:?}, expected tiny or full"))),
    }
    t.validate().map_err(|e| usage(format!("train config: {e}")))?;

    let ds = load_dataset(&a.data)?;
    let skeleton = Skeleton::smpl22();
    let encoded = ds
        .records
        .into_iter()
        .map(|r| EncodedRecord::encode(r, &skeleton))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&a.out)?;
    cfg.echo_into(&a.out)?;
    let mut trainer = Trainer::new(cfg.train.clone(), &encoded, ds.manifest.stats, exec)?.checkpoint_into(&a.out);
    let report = trainer.run()?;
    report.write_csv(&a.out.join("loss.csv"))?;
    let model = a.out.join("model.json");
    trainer.checkpoint().save(&model)?;
    let last = report.curve.last();
    println!(
        "trained {} iterations; final total {:.5}, simple {:.5}; model at {}",
        trainer.iteration,
        last.map_or(f64::NAN, |r| r.total),
        last.map_or(f64::NAN, |r| r.simple),
        model.display()
    );
    Ok(())
}

fn apply_plan_args(s: &mut SampleSettings, a: &PlanArgs) {
    set(&mut s.seed, &a.seed);
    set(&mut s.guidance, &a.guidance);
    if a.steps.is_some() {
        s.steps = a.steps;
    }
    if a.text.is_some() {
        s.text = a.text.clone();
    }
    set(&mut s.warmup, &a.warmup);
    if a.max_windows.is_some() {
        s.max_windows = a.max_windows;
    }
}

fn load_planner(path: &Path, s: &SampleSettings) -> Result<Planner> {
    let guidance = GuidanceConfig { w: s.guidance, mask_rate: s.mask_rate };
    guidance.validate().map_err(|e| usage(format!("guidance: {e}")))?;
    if s.steps == Some(0) {
        return Err(usage("--steps must be at least 1"));
    }
    let ck = Checkpoint::load(path)?;
    Planner::from_checkpoint(&ck, s.steps, guidance)
}

fn warmup_init(name: &str, record: Option<&InteractionRecord>) -> Result<WarmupInit> {
    match name {
        "unconditioned" => Ok(WarmupInit::Unconditioned),
        "rest" => Ok(WarmupInit::RestPose),
        "provided" => match record {
            Some(r) if r.reactor.len() >= WARMUP_FRAMES => {
                Ok(WarmupInit::Provided(r.reactor.frames[..WARMUP_FRAMES].to_vec()))
            }
            Some(_) => Err(usage(format!("provided warm-up needs {WARMUP_FRAMES} recorded reactor frames"))),
            None => Err(usage("provided warm-up is only available when sampling a dataset")),
        },
        other => Err(usage(format!("unknown warm-up {other:?}, expected unconditioned, rest or provided"))),
    }
}

fn sample(cfg: &mut RunConfig, a: &SampleArgs, exec: Execution) -> Result<()> {
    apply_plan_args(&mut cfg.sample, &a.plan);
    let s = cfg.sample.clone();
    if !matches!(s.warmup.as_str(), "unconditioned" | "rest" | "provided") {
        return Err(usage(format!("unknown warm-up {:?}, expected unconditioned, rest or provided", s.warmup)));
    }
    let planner = load_planner(&a.plan.checkpoint, &s)?;
    let ds = load_dataset(&a.data)?;
    let results = exec.map_range(ds.records.len(), |i| -> Result<(InteractionRecord, RunReport)> {
        let rec = &ds.records[i];
        let label = s.text.clone().unwrap_or_else(|| rec.label.clone());
        let stream = StreamConfig {
            planner: PlannerConfig {
                init: warmup_init(&s.warmup, Some(rec))?,
                seed: s.seed.wrapping_add(i as u64),
                text: Some(label.clone()),
                ..Default::default()
            },
            pacing: Pacing::Batch,
            pipeline: PipelineMode::Sequential,
            max_windows: s.max_windows,
        };
        let mut source = ClipSource::new(&rec.actor, None);
        let mut sink = VecSink::default();
        let report = run_stream(&planner, &mut source, &mut sink, &stream)?;
        if let Some(e) = &report.error {
            return Err(Error::Sink(e.clone()));
        }
        let reactor = sink.poses();
        if reactor.len() < 2 {
            return Err(usage(format!("record {i} is too short to plan a window")));
        }
        let n = reactor.len();
        let actor = rec.actor.slice(WARMUP_FRAMES, WARMUP_FRAMES + n);
        let generated = InteractionRecord {
            actor,
            reactor: MotionClip::new(rec.actor.fps, AgentId::Reactor, reactor),
            label,
            scenario: rec.scenario,
            seed: rec.seed,
        };
        Ok((generated, report))
    });
    let mut records = Vec::with_capacity(results.len());
    let mut latencies = Vec::new();
    for r in results {
        let (rec, report) = r?;
        latencies.extend(report.latencies_ms);
        records.push(rec);
    }
    write_dataset(&a.out, &records)?;
    cfg.echo_into(&a.out)?;
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let p95 = sorted.get(((sorted.len() as f64 * 0.95).ceil() as usize).saturating_sub(1)).copied().unwrap_or(0.0);
    info!("planned {} windows, p95 latency {p95:.1} ms", latencies.len());
    println!("wrote {} generated records to {}", records.len(), a.out.display());
    Ok(())
}

fn stream(cfg: &mut RunConfig, a: &StreamArgs, deterministic: bool) -> Result<()> {
    apply_plan_args(&mut cfg.stream.sample, &a.plan);
    if a.realtime {
        cfg.stream.realtime = true;
    }
    set(&mut cfg.stream.queue, &a.queue);
    if deterministic {
        cfg.stream.queue = 0;
    }
    let s = cfg.stream.sample.clone();
    let planner = load_planner(&a.plan.checkpoint, &s)?;
    let config = StreamConfig {
        planner: PlannerConfig { init: warmup_init(&s.warmup, None)?, seed: s.seed, text: s.text.clone(), ..Default::default() },
        pacing: if cfg.stream.realtime { Pacing::Realtime } else { Pacing::Batch },
        pipeline: match cfg.stream.queue {
            0 => PipelineMode::Sequential,
            capacity => PipelineMode::Threaded { capacity },
        },
        max_windows: s.max_windows,
    };
    let report = match &a.listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            info!("listening on {}", listener.local_addr()?);
            let (conn, peer) = listener.accept()?;
            info!("serving {peer}");
            let mut source = LineSource::new(BufReader::new(conn.try_clone()?));
            let mut sink = LineSink::new(BufWriter::new(conn));
            run_stream(&planner, &mut source, &mut sink, &config)?
        }
        None => {
            let mut source = LineSource::new(BufReader::new(std::io::stdin()));
            let mut sink = LineSink::new(BufWriter::new(std::io::stdout()));
            run_stream(&planner, &mut source, &mut sink, &config)?
        }
    };
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    eprintln!(
        "streamed {} windows, {} frames; p95 latency {:.1} ms; mean boundary gap {:.4} m",
        report.windows, report.emitted_frames, report.latency.p95_ms, report.mean_boundary_gap
    );
    match report.error {
        Some(e) => Err(Error::Sink(e)),
        None => Ok(()),
    }
}

fn eval_samples(records: Vec<InteractionRecord>) -> Vec<EvalSample> {
    records.into_iter().map(|r| EvalSample { reactor: r.reactor, actor: r.actor, label: r.label }).collect()
}

fn evaluate_cmd(cfg: &mut RunConfig, a: &EvaluateArgs, exec: Execution) -> Result<()> {
    let m = &mut cfg.evaluate;
    set(&mut m.window, &a.window);
    set(&mut m.diversity_subset, &a.diversity_subset);
    set(&mut m.seed, &a.seed);
    set(&mut m.voxel, &a.voxel);
    if let Some(r) = a.joint_radius {
        m.radii = JointRadii::uniform(r);
    }
    m.radii.validate().map_err(|e| usage(format!("joint radii: {e}")))?;
    if !(m.voxel > 0.0) || m.window < 2 || m.diversity_subset == 0 {
        return Err(usage("voxel must be positive, window at least 2 and the diversity subset at least 1"));
    }
    let generated = load_dataset(&a.generated)?;
    let reference = load_dataset(&a.reference)?;
    let (report, rows) = evaluate(
        &eval_samples(generated.records),
        &eval_samples(reference.records),
        &Skeleton::smpl22(),
        &cfg.evaluate,
        exec,
    )?;
    fs::create_dir_all(&a.out)?;
    cfg.echo_into(&a.out)?;
    report.write_text(&a.out.join("metrics.txt"))?;
    write_window_csv(&rows, &a.out.join("windows.csv"))?;
    print!("{}", report.to_text());
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let p = &a.path;
    if p.is_dir() {
        let ds = load_dataset(p)?;
        let frames: usize = ds.records.iter().map(|r| r.len()).sum();
        println!("dataset {}", p.display());
        println!("records: {}", ds.records.len());
        println!("frames: {frames}");
        println!("labels: {}", ds.manifest.vocabulary.join(", "));
        for e in &ds.manifest.records {
            println!("  {} {} frames, label {:?}", e.name, e.frames, e.label);
        }
    } else if p.extension().is_some_and(|e| e == "mclip") {
        let clip = duet_core::data::read_clip(p)?;
        println!("clip {}", p.display());
        println!("agent: {:?}", clip.agent);
        println!("frames: {} at {} fps", clip.len(), clip.fps);
    } else {
        let ck = Checkpoint::load(p)?;
        let model = ck.model()?;
        println!("checkpoint {}", p.display());
        println!("iteration: {}", ck.iteration);
        println!("parameters: {}", model.param_count());
        println!(
            "model: {} layers, {} hidden, {} heads, ff x{}",
            ck.config.layers, ck.config.hidden, ck.config.heads, ck.config.ff_mult
        );
        println!("schedule: {:?}, T = {}", ck.schedule_kind, ck.steps);
        println!("optimizer state: {}", if ck.optimizer.is_some() { "yes" } else { "no" });
    }
    Ok(())
}
