use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lookahead_core::complexity::{pairwise_distance_distribution, sample_sources, sweep_distributions};
use lookahead_core::generator::{generate_dataset, DatasetGrid};
use lookahead_core::parallel::Execution;
use lookahead_core::profile::erdos_renyi_gnm;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn lookahead_sweeps(c: &mut Criterion) {
    let g = erdos_renyi_gnm(20_000, 100_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let sources = sample_sources(20_000, 256, 2);
    let mut group = c.benchmark_group("lookahead_sweep");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sweep_distributions(&g, &sources, None, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("distance_sweep");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| pairwise_distance_distribution(&g, Some(&sources), exec).unwrap())
        });
    }
    group.finish();
}

fn dataset_generation(c: &mut Criterion) {
    let grid = DatasetGrid {
        cells: [2, 4, 8, 16, 32]
            .iter()
            .flat_map(|&l| [1, 2, 4, 8].map(|b| (l, b)))
            .collect(),
        ..Default::default()
    };
    let mut group = c.benchmark_group("generate_grid");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_dataset(&grid, 10, 3, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lookahead_sweeps, dataset_generation);
criterion_main!(benches);
