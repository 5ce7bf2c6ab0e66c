use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use uavmed_core::batch::{run_batch_sequential, seed_jobs};
use uavmed_core::dynamics::{step, Action};
use uavmed_core::policies::PolicyKind;
use uavmed_core::scenario::{build_world, ScenarioConfig};

fn single_step(c: &mut Criterion) {
    let cfg = ScenarioConfig::brussels();
    let world = build_world(&cfg, 1).unwrap();
    let actions = vec![Action::Up; world.uavs.len()];
    c.bench_function("dynamics step (10 UAVs)", |b| b.iter(|| step(black_box(&world), &actions).unwrap()));
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy batch of 32 episodes");
    group.sample_size(10);
    for fleet in [4u32, 16] {
        let mut cfg = ScenarioConfig::brussels();
        cfg.fleet_size = fleet;
        let jobs = seed_jobs(Arc::new(cfg), PolicyKind::Greedy, 0, 32);
        group.bench_with_input(BenchmarkId::new("sequential", fleet), &jobs, |b, jobs| {
            b.iter(|| run_batch_sequential(jobs, None).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("rayon", fleet), &jobs, |b, jobs| {
            b.iter(|| uavmed_core::batch::run_batch_parallel(jobs, None, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, single_step, batch);
criterion_main!(benches);
