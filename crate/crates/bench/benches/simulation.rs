use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use popproc_core::composed::{BirthAtPoisson, DeathAtPoisson, IteratedBirth, Process, SublinearDeathAtPoisson};
use popproc_core::sim::{estimate_states, path_rng, sample_process};
use popproc_core::{ComposedModel, SimConfig};

fn paths(c: &mut Criterion) {
    let models = [
        ComposedModel::IteratedBirth(IteratedBirth::new(0.5, 1.0).unwrap()),
        ComposedModel::BirthAtPoisson(BirthAtPoisson::new(0.5, 1.0, 1).unwrap()),
        ComposedModel::DeathAtPoisson(DeathAtPoisson::new(0.5, 1.0, 10).unwrap()),
        ComposedModel::SublinearDeathAtPoisson(SublinearDeathAtPoisson::new(0.7, 1.0, 4).unwrap()),
    ];
    let mut g = c.benchmark_group("sample-path");
    for m in models {
        let p = Process::Composed(m);
        g.bench_function(m.name(), |b| {
            let mut i = 0u64;
            b.iter(|| {
                i += 1;
                let mut rng = path_rng(7, i);
                sample_process(&p, black_box(1.0), &mut rng, &mut |_| false).unwrap()
            })
        });
    }
    g.finish();
}

fn estimates(c: &mut Criterion) {
    let p = Process::Composed(ComposedModel::DeathAtPoisson(DeathAtPoisson::new(0.5, 1.0, 10).unwrap()));
    let cfg = SimConfig::new(7, 100_000, 1.0, vec![0.5, 1.0]).unwrap();
    let mut g = c.benchmark_group("estimate");
    g.sample_size(10);
    g.throughput(Throughput::Elements(cfg.n_paths));
    g.bench_function("states/death-at-poisson", |b| b.iter(|| estimate_states(&p, black_box(&cfg)).unwrap()));
    g.finish();
}

criterion_group!(benches, paths, estimates);
criterion_main!(benches);
