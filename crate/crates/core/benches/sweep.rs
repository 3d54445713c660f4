use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use touchroi::{roc_sweep, Execution, MatrixParams, ReadoutScheme, SweepSettings};

fn sweep(c: &mut Criterion) {
    let params = MatrixParams::new(420, 5, 20, 10_000).unwrap();
    let mut settings = SweepSettings::new(vec![0.5, 2.0, 5.0, 10.0], 64);
    settings.schemes = vec![ReadoutScheme::ContextAware, ReadoutScheme::Tdm];

    let mut group = c.benchmark_group("roc_sweep");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { threads: 0 }),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| roc_sweep(&params, &settings, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
