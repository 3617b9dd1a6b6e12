use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pckm::experiment::{make_synthetic, run_on, ExperimentConfig, Method, NamedDataset};
use pckm::metrics::nmi_index_with;
use pckm::{mono_kmeans, rng_from_seed, standardize, EmConfig, Execution};

fn modes() -> Vec<Execution> {
    if cfg!(feature = "parallel") {
        vec![Execution::Sequential, Execution::Parallel]
    } else {
        vec![Execution::Sequential]
    }
}

fn synthetic(n: usize) -> pckm::Dataset {
    standardize(&make_synthetic(n, 4, 4, 0.1, &mut rng_from_seed(1)).unwrap()).unwrap()
}

fn nmi(c: &mut Criterion) {
    let mut group = c.benchmark_group("nmi_index");
    for n in [500, 2000] {
        let d = synthetic(n);
        let labels = mono_kmeans(&d, &EmConfig::new(4).with_seed(0)).unwrap().labels().unwrap().to_vec();
        for exec in modes() {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                b.iter(|| nmi_index_with(black_box(&labels), &d, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_on");
    group.sample_size(10);
    let ds = [NamedDataset { name: "synth".into(), data: synthetic(500) }];
    let cfg = ExperimentConfig {
        fractions: vec![0.1, 0.15],
        methods: Method::ALL.to_vec(),
        repeats: 4,
        ..ExperimentConfig::default()
    };
    for exec in modes() {
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| run_on(&ds, &cfg, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, nmi, experiment);
criterion_main!(benches);
