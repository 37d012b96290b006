//! Parallel vs sequential scoring. Build with `--no-default-features` to
//! measure the sequential fallback for every worker count.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use vdp_core::filter::{consecutive_similarities, score_frames};
use vdp_core::{FilterConfig, FilterError, FrameRef, GrayImage};

const WIDTH: usize = 640;
const HEIGHT: usize = 240;
const FRAMES: usize = 24;

fn frame(f: &FrameRef) -> Result<GrayImage, FilterError> {
    let seed = f.index as u64;
    Ok(GrayImage::from_fn(WIDTH, HEIGHT, |x, y| {
        let mut h = (x as u64) << 32 ^ (y as u64) << 12 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 29;
        (h & 0xff) as f64
    })?)
}

fn worker_counts() -> Vec<usize> {
    let max = vdp_core::par::default_workers().max(2);
    let mut counts = vec![1, 2, 4, max];
    counts.sort_unstable();
    counts.dedup();
    counts
}

fn frames() -> Vec<FrameRef> {
    (0..FRAMES).map(|i| FrameRef::new("bench", format!("{i:06}"), i)).collect()
}

fn vol_scoring(c: &mut Criterion) {
    let frames = frames();
    let mut group = c.benchmark_group("vol_scoring");
    group.sample_size(10).throughput(Throughput::Elements(FRAMES as u64));
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| score_frames(&frames, &frame, w).unwrap())
        });
    }
    group.finish();
}

fn ssim_pairs(c: &mut Criterion) {
    let frames = frames();
    let mut group = c.benchmark_group("ssim_consecutive");
    group.sample_size(10).throughput(Throughput::Elements(FRAMES as u64 - 1));
    for workers in worker_counts() {
        let cfg = FilterConfig { workers, ..FilterConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(workers), &cfg, |b, cfg| {
            b.iter(|| consecutive_similarities(&frames, &frame, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, vol_scoring, ssim_pairs);
criterion_main!(benches);
