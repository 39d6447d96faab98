use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use tablemult_bench::{scrambled_entries, summing_table};
use tablemult_core::Store;

const N: u64 = 100_000;

fn ingest(c: &mut Criterion) {
    let entries = scrambled_entries(N, 20_000);
    let mut group = c.benchmark_group("store/ingest");
    group.throughput(Throughput::Elements(N));
    group.sample_size(20);
    for limit in [1 << 12, 1 << 20] {
        group.bench_function(format!("memmap{limit}"), |b| {
            b.iter_batched(
                || (Store::new(), entries.clone()),
                |(store, entries)| {
                    let t = summing_table(&store, "T", limit).expect("table");
                    t.batch_write(entries).expect("write");
                    t
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let store = Store::new();
    let t = summing_table(&store, "T", 1 << 12).expect("table");
    t.batch_write(scrambled_entries(N, 20_000)).expect("write");
    let mut group = c.benchmark_group("store/scan");
    group.throughput(Throughput::Elements(N));
    group.bench_function("runs", |b| b.iter(|| store.scan_all(&t).expect("scan").len()));
    t.flush().expect("flush");
    t.compact().expect("compact");
    group.bench_function("compacted", |b| b.iter(|| store.scan_all(&t).expect("scan").len()));
    group.finish();
}

criterion_group!(benches, ingest, scan);
criterion_main!(benches);
