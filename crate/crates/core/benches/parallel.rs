use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dbess::cluster::{Cluster, CommLedger};
use dbess::datagen::{DesignSpec, SyntheticDataset};
use dbess::dbess::{dbess_sweep, FixConfig};
use dbess::experiment::{run_replicates, FitMode, Init, Scenario};
use dbess::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn cluster_build(c: &mut Criterion) {
    let data = SyntheticDataset::generate(&DesignSpec::correlated(100), 10_000, 10, 1).unwrap();
    let mut group = c.benchmark_group("cluster_build_m20_n10000_p100");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| Cluster::from_data(black_box(&data.x), black_box(&data.y), 20, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let data = SyntheticDataset::generate(&DesignSpec::correlated(100), 10_000, 10, 2).unwrap();
    let mut group = c.benchmark_group("gic_sweep_s_max20");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, exec) in MODES {
        let cluster = Cluster::from_data(&data.x, &data.y, 20, 7, exec).unwrap();
        let theta0 = cluster.oneshot_init(&mut CommLedger::new()).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| dbess_sweep(&cluster, black_box(&theta0), 20, &FixConfig::new(1)).unwrap())
        });
    }
    group.finish();
}

fn replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_batch");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for count in [4, 16] {
        let scenario = Scenario {
            n_total: 4000,
            machines: 10,
            design: DesignSpec::uncorrelated(50),
            s_star: 5,
            init: Init::Oneshot,
            mode: FitMode::Fixed(5),
            fix: FixConfig::new(5),
        };
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, count), &count, |b, &count| {
                b.iter(|| run_replicates(&scenario, 11, count, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, cluster_build, sweep, replicates);
criterion_main!(benches);
