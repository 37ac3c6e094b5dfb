use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use qrng_core::extractor::toeplitz::deterministic_seed;
use qrng_core::extractor::{Backend, ToeplitzHasher, ToeplitzSpec};

fn bench_toeplitz(c: &mut Criterion) {
    let (n, m) = (15000, 10788);
    let spec = ToeplitzSpec::new(n, m, deterministic_seed(n + m - 1, 1), 74.75).unwrap();
    let blocks = 256;
    let stream = deterministic_seed(n * blocks, 2);

    let mut group = c.benchmark_group("toeplitz_15000x10788");
    group.throughput(Throughput::Elements((n * blocks) as u64));
    for backend in [Backend::Pclmul, Backend::Portable] {
        if !backend.is_available() {
            continue;
        }
        let hasher = ToeplitzHasher::with_backend(&spec, backend);
        group.bench_function(format!("{backend:?}_serial"), |b| {
            b.iter(|| hasher.extract_serial(black_box(&stream)).unwrap())
        });
    }
    let hasher = ToeplitzHasher::new(&spec);
    group.bench_function("parallel", |b| b.iter(|| hasher.extract(black_box(&stream)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_toeplitz);
criterion_main!(benches);
