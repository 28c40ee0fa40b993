use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jdsep::{run_method, Method};
use jdsep_bench::fixture;

// One iteration of each method as the channel count grows.
fn per_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("iteration");
    group.sample_size(10);
    for m in [2, 3, 4] {
        let (covs, init) = fixture(m, 4, 65, 64);
        for method in [Method::FcaMm, Method::FastfcaMm, Method::FastfcaEm, Method::Fastmnmf] {
            group.bench_with_input(BenchmarkId::new(method.name(), m), &m, |b, _| {
                b.iter(|| run_method(method, &covs, &init, 1, 0).expect("fit"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, per_iteration);
criterion_main!(benches);
