use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mollow_core::experiments::{self, Execution, Outputs};

fn bench_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for name in ["fig2_phase", "fig4_phi0"] {
        let mut spec = experiments::scenario(name).unwrap();
        spec.run.outputs = Outputs::default();
        group.bench_with_input(BenchmarkId::new("sequential", name), &spec, |b, s| {
            b.iter(|| experiments::run_sweep(s, Execution::Sequential).unwrap())
        });
        if cfg!(feature = "parallel") {
            group.bench_with_input(BenchmarkId::new("parallel", name), &spec, |b, s| {
                b.iter(|| experiments::run_sweep(s, Execution::Parallel { jobs: None }).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
