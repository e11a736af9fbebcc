//! Sequential vs data-parallel evaluation of one swarm's worth of window
//! objectives. Build with `--no-default-features` to see the parallel path
//! fall back to a plain loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use episwarm::calibration::ParamBounds;
use episwarm::exec;
use episwarm::model::{integrate_euler, SirdParams, SirdState, DEFAULT_SUBSTEPS};
use episwarm::objectives::{ObjectiveSpec, ObservedWindow, WindowObjective};
use episwarm::pso::{BatchObjective, ParallelObjective, SequentialObjective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const POPULATION: f64 = 1e6;
const TAU: usize = 35;

fn batch_eval(c: &mut Criterion) {
    let truth = SirdParams { beta1: 0.35, beta2: 0.2, t1: 10.0, t2: 20.0, gamma: 0.1, mu: 0.01 };
    let init = SirdState::new(POPULATION - 1200.0, 1000.0, 150.0, 50.0);
    let traj = integrate_euler(&truth, &init, POPULATION, TAU, DEFAULT_SUBSTEPS).unwrap();
    let (i, r, d) = (traj.infectious(), traj.recovered(), traj.deaths());
    let observed = ObservedWindow { infectious: &i, recovered: &r, deaths: &d };
    let objective = WindowObjective::new(ObjectiveSpec::default(), observed).unwrap();
    let cost = |x: &[f64]| {
        integrate_euler(&SirdParams::from_slice(x), &init, POPULATION, TAU, DEFAULT_SUBSTEPS)
            .map(|t| objective.evaluate(&t).unwrap_or(f64::INFINITY))
            .unwrap_or(f64::INFINITY)
    };

    let bounds = ParamBounds::stage2().search_bounds(TAU).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let positions: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..6).map(|k| rng.random_range(bounds.lower()[k]..=bounds.upper()[k])).collect())
        .collect();
    let refs: Vec<&[f64]> = positions.iter().map(Vec::as_slice).collect();
    let mut costs = vec![0.0; refs.len()];

    let mut group = c.benchmark_group("batch_eval");
    group.sample_size(10);
    group.throughput(Throughput::Elements(refs.len() as u64));
    group.bench_function("sequential", |b| {
        let eval = SequentialObjective(cost);
        b.iter(|| eval.evaluate_batch(black_box(&refs), &mut costs))
    });
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    for threads in [1, 2, 4].into_iter().filter(|&t| t == 1 || t <= cores) {
        group.bench_with_input(BenchmarkId::new("parallel", threads), &threads, |b, &threads| {
            let eval = ParallelObjective(cost);
            exec::with_threads(Some(threads), || {
                b.iter(|| eval.evaluate_batch(black_box(&refs), &mut costs))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_eval);
criterion_main!(benches);
