use candle_core::{Device, Tensor};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use trend_bench::{span_inputs, uniform};
use trend_core::heads::{decode_span, fuse};

fn bench_decode_span(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode_span");
    for len in [128, 512] {
        let (start, end, mask) = span_inputs(len, 3);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| decode_span(black_box(&start), black_box(&end), &mask, true, 10).unwrap())
        });
    }
    group.finish();
}

fn bench_fuse(c: &mut Criterion) {
    let mut group = c.benchmark_group("fuse");
    for (k, d) in [(3, 256), (10, 768)] {
        let ctx = Tensor::from_vec(uniform(d, 1), d, &Device::Cpu).unwrap();
        let x = Tensor::from_vec(uniform(k * d, 2), (k, d), &Device::Cpu).unwrap();
        group.bench_function(BenchmarkId::new(format!("k{k}"), d), |b| {
            b.iter(|| fuse(black_box(&ctx), black_box(&x)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_decode_span, bench_fuse);
criterion_main!(benches);
