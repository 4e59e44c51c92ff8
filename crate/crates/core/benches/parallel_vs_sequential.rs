use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use duet_core::data::manifest::fit_stats;
use duet_core::data::{synth_generate, EncodedRecord, InteractionRecord, Scenario};
use duet_core::diffusion::{build_schedule, ScheduleKind};
use duet_core::metrics::{evaluate, interpenetration_per_frame, EvalSample, JointRadii, MetricConfig, DEFAULT_VOXEL};
use duet_core::motion::Skeleton;
use duet_core::nn::{Denoiser, DenoiserConfig};
use duet_core::training::{evaluate_simple_loss, TrainConfig, TrainPlan, Trainer};
use duet_core::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn records(n: u64, frames: usize) -> Vec<InteractionRecord> {
    (0..n).map(|s| synth_generate(Scenario::ALL[s as usize % Scenario::ALL.len()], frames, s).unwrap()).collect()
}

fn bench_denoiser(c: &mut Criterion) {
    let sk = Skeleton::smpl22();
    let recs = records(4, 240);
    let norm = fit_stats(&recs, &sk).unwrap();
    let enc: Vec<_> = recs.into_iter().map(|r| EncodedRecord::encode(r, &sk).unwrap()).collect();
    let model = Denoiser::new(DenoiserConfig::default(), 0).unwrap();
    let schedule = build_schedule(8, ScheduleKind::Cosine).unwrap();

    let mut group = c.benchmark_group("eval_loss");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_simple_loss(&model, &enc, &norm, &schedule, 2, 1, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("train_steps");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let config = TrainConfig {
                    plan: TrainPlan { max_iters: 4, phase_starts: [4, 4], windows: 1, batch_size: 8, seed: 2 },
                    log_every: 0,
                    ..Default::default()
                };
                Trainer::new(config, &enc, norm.clone(), exec).unwrap().run().unwrap()
            })
        });
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let sk = Skeleton::smpl22();
    let recs = records(6, 120);
    let samples: Vec<EvalSample> = recs
        .iter()
        .map(|r| EvalSample { reactor: r.reactor.clone(), actor: r.actor.clone(), label: r.label.clone() })
        .collect();
    let close = &recs[3];
    let radii = JointRadii::default();
    let cfg = MetricConfig::default();

    let mut group = c.benchmark_group("interpenetration");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| interpenetration_per_frame(&close.reactor, &close.actor, &radii, DEFAULT_VOXEL, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&samples, &samples, &sk, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_denoiser, bench_metrics);
criterion_main!(benches);
