use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tablemult_bench::GraphFixture;
use tablemult_core::experiment::Method;

fn methods(c: &mut Criterion) {
    let mut fixture = GraphFixture::new(8, 1).expect("fixture");
    let products = fixture.multiply(Method::Outer).expect("warm-up");
    let rows = fixture.inputs.a_rows().expect("rows");
    let mut group = c.benchmark_group("multiply/scale8");
    group.sample_size(10);
    group.throughput(Throughput::Elements(products));
    for method in [Method::Outer, Method::Hybrid(4), Method::Hybrid(rows / 4), Method::Inner] {
        group.bench_with_input(BenchmarkId::from_parameter(method), &method, |b, &m| {
            b.iter(|| fixture.multiply(m).expect("multiply"))
        });
    }
    group.finish();
}

fn tablets(c: &mut Criterion) {
    let mut group = c.benchmark_group("outer/scale10");
    group.sample_size(10);
    for tablets in [1, 2] {
        let mut fixture = GraphFixture::new(10, tablets).expect("fixture");
        let products = fixture.multiply(Method::Outer).expect("warm-up");
        group.throughput(Throughput::Elements(products));
        group.bench_function(BenchmarkId::new("tablets", tablets), |b| {
            b.iter(|| fixture.multiply(Method::Outer).expect("multiply"))
        });
    }
    group.finish();
}

criterion_group!(benches, methods, tablets);
criterion_main!(benches);
