//! Brute-force reference implementations and synthetic frame builders shared
//! by the integration tests. Nothing here calls into the library's image
//! math.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vdp_core::GrayImage;

/// Mirror an out-of-range coordinate without repeating the edge sample.
fn mirror(i: i64, n: i64) -> i64 {
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
    }
    i
}

/// Direct 3x3 convolution of `rows` with the 4-neighbour Laplacian kernel.
pub fn laplacian_oracle(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    const KERNEL: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
    let h = rows.len() as i64;
    let w = rows[0].len() as i64;
    let mut out = vec![vec![0.0; w as usize]; h as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, krow) in KERNEL.iter().enumerate() {
                for (kx, k) in krow.iter().enumerate() {
                    let sy = mirror(y + ky as i64 - 1, h) as usize;
                    let sx = mirror(x + kx as i64 - 1, w) as usize;
                    acc += k * rows[sy][sx];
                }
            }
            out[y as usize][x as usize] = acc;
        }
    }
    out
}

/// Two-pass population variance.
pub fn variance_oracle(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub fn vol_oracle(rows: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = laplacian_oracle(rows).into_iter().flatten().collect();
    variance_oracle(&flat)
}

/// Iterates every fully-interior `side x side` window and applies the local
/// SSIM formula directly, then averages.
pub fn ssim_oracle(a: &[Vec<f64>], b: &[Vec<f64>], side: usize) -> f64 {
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let h = a.len();
    let w = a[0].len();
    let n = (side * side) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=h - side {
        for x0 in 0..=w - side {
            let mut wa = Vec::with_capacity(side * side);
            let mut wb = Vec::with_capacity(side * side);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    wa.push(a[y][x]);
                    wb.push(b[y][x]);
                }
            }
            let ma = wa.iter().sum::<f64>() / n;
            let mb = wb.iter().sum::<f64>() / n;
            let va = wa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = wb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = wa.iter().zip(&wb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    total / windows as f64
}

pub fn rows_of(img: &GrayImage) -> Vec<Vec<f64>> {
    img.pixels().chunks(img.width()).map(|r| r.to_vec()).collect()
}

pub fn image_of(rows: &[Vec<f64>]) -> GrayImage {
    GrayImage::new(rows[0].len(), rows.len(), rows.concat()).unwrap()
}

pub fn random_rows(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<Vec<f64>> {
    (0..height)
        .map(|_| (0..width).map(|_| rng.random_range(0.0..=255.0)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform 8-bit noise: very high VOL, near-zero SSIM against other noise.
pub fn noise_frame(seed: u64, width: usize, height: usize) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(width, height, |_, _| r.random_range(0u8..=255) as f64).unwrap()
}

pub fn checkerboard(width: usize, height: usize) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| if (x + y) % 2 == 0 { 255.0 } else { 0.0 }).unwrap()
}

/// Repeated 3x3 box blur with clamped borders.
pub fn box_blur(img: &GrayImage, passes: usize) -> GrayImage {
    let (w, h) = img.dimensions();
    let mut cur = img.clone();
    for _ in 0..passes {
        let src = cur.clone();
        cur = GrayImage::from_fn(w, h, |x, y| {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    acc += src.get(sx, sy);
                }
            }
            acc / 9.0
        })
        .unwrap();
    }
    cur
}

/// 5x5 binomial (Gaussian-like) blur with clamped borders.
pub fn gaussian_blur(img: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let (w, h) = img.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (j, ky) in K.iter().enumerate() {
            for (i, kx) in K.iter().enumerate() {
                let sx = (x as i64 + i as i64 - 2).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + j as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += kx * ky * img.get(sx, sy);
            }
        }
        acc / 256.0
    })
    .unwrap()
}

/// Writes `img` as an 8-bit grayscale PNG.
pub fn write_png(img: &GrayImage, path: &std::path::Path) {
    let bytes: Vec<u8> = img.pixels().iter().map(|v| v.round() as u8).collect();
    image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .unwrap()
        .save(path)
        .unwrap();
}

/// Frame refs `000000..` for sequence `seq`.
pub fn frame_refs(seq: &str, n: usize) -> Vec<vdp_core::FrameRef> {
    (0..n).map(|i| vdp_core::FrameRef::new(seq, format!("{i:06}"), i)).collect()
}

/// Random sequence of 5-40 small frames mixing fresh scenes, near-copies of
/// the previous frame, blurred frames and flat frames.
pub fn random_sequence(seed: u64) -> (Vec<vdp_core::FrameRef>, vdp_core::filter::MemorySource) {
    let mut r = rng(seed);
    let n = r.random_range(5..=40);
    let side = 16;
    let frames = frame_refs(&format!("syn{seed}"), n);
    let mut source = vdp_core::filter::MemorySource::new();
    let mut prev = noise_frame(seed * 1000, side, side);
    for (i, f) in frames.iter().enumerate() {
        let img = match r.random_range(0..4) {
            0 => noise_frame(seed * 1000 + i as u64 + 1, side, side),
            1 => {
                let jitter = r.random_range(1.0..40.0);
                let mut jr = rng(seed * 7919 + i as u64);
                GrayImage::from_fn(side, side, |x, y| {
                    prev.get(x, y) + jr.random_range(-jitter..=jitter)
                })
                .unwrap()
            }
            2 => box_blur(&prev, r.random_range(1..4)),
            _ => GrayImage::filled(side, side, r.random_range(0.0..255.0)).unwrap(),
        };
        source.insert(f.frame_id.clone(), img.clone());
        prev = img;
    }
    (frames, source)
}

/// A manifest from a real filter run over a random sequence, with random
/// per-frame scenes and a fixed timestamp.
pub fn random_manifest(seed: u64) -> vdp_core::SequenceManifest {
    use chrono::TimeZone;
    use vdp_core::{FilterConfig, SceneCategory, SsimMode};

    let (frames, src) = random_sequence(seed);
    let mut r = rng(seed ^ 0xabcdef);
    let cfg = FilterConfig {
        vol_threshold: r.random_range(1.0..5000.0),
        ssim_threshold: r.random_range(0.0..=1.0),
        ssim_mode: if r.random_bool(0.5) { SsimMode::Anchor } else { SsimMode::Consecutive },
        ..FilterConfig::default()
    };
    let mut outcome = vdp_core::filter::run_frames(&format!("{seed:04}"), &frames, &src, &cfg).unwrap();
    outcome.elapsed_seconds = r.random_range(0.001..30.0);
    let scenes: Vec<SceneCategory> = outcome
        .scores
        .iter()
        .map(|_| SceneCategory::ALL[r.random_range(0..5)])
        .collect();
    vdp_core::SequenceManifest::build(
        &outcome,
        &cfg,
        &scenes,
        r.random_range(0.0..=1.0),
        chrono::Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap(),
    )
    .unwrap()
}
