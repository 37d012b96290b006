mod common;

use common::*;
use vdp_core::filter::{
    self, consecutive_similarities, run_frames, run_pipeline, score_frames, ssim_filter, sweep,
    sweep_frames, MemorySource,
};
use vdp_core::{FilterConfig, FilterError, GrayImage, SsimMode};

#[test]
fn constant_frames_score_zero_for_any_worker_count() {
    let frames = frame_refs("c", 10);
    let mut src = MemorySource::new();
    for (i, f) in frames.iter().enumerate() {
        src.insert(f.frame_id.clone(), GrayImage::filled(20, 10, 10.0 * i as f64).unwrap());
    }
    let one = score_frames(&frames, &src, 1).unwrap();
    let eight = score_frames(&frames, &src, 8).unwrap();
    assert_eq!(one, eight);
    assert_eq!(one.scores.len(), 10);
    assert!(one.scores.iter().all(|s| s.vol == 0.0));
}

#[test]
fn sharp_blurred_constant_strictly_decrease() {
    let frames = frame_refs("t", 3);
    let sharp = checkerboard(16, 16);
    let blurred = gaussian_blur(&sharp);
    let flat = GrayImage::filled(16, 16, 128.0).unwrap();
    let expected = [
        vol_oracle(&rows_of(&sharp)),
        vol_oracle(&rows_of(&blurred)),
        vol_oracle(&rows_of(&flat)),
    ];
    assert!(expected[0] > expected[1] && expected[1] > expected[2]);

    let mut src = MemorySource::new();
    for (f, img) in frames.iter().zip([sharp, blurred, flat]) {
        src.insert(f.frame_id.clone(), img);
    }
    let scored = score_frames(&frames, &src, 3).unwrap();
    for (s, e) in scored.scores.iter().zip(expected) {
        assert!((s.vol - e).abs() < 1e-9 * e.max(1.0));
    }
}

#[test]
fn dissimilar_frames_all_survive() {
    let frames = frame_refs("d", 3);
    let imgs: Vec<GrayImage> = (0..3).map(|i| noise_frame(100 + i, 24, 24)).collect();
    for i in 0..3 {
        for j in i + 1..3 {
            let s = ssim_oracle(&rows_of(&imgs[i]), &rows_of(&imgs[j]), 7);
            assert!(s < 0.2, "pair {i},{j} has ssim {s}");
        }
    }
    let mut src = MemorySource::new();
    for (f, img) in frames.iter().zip(imgs) {
        src.insert(f.frame_id.clone(), img);
    }
    for mode in [SsimMode::Consecutive, SsimMode::Anchor] {
        let cfg = FilterConfig {
            ssim_threshold: 0.5,
            ssim_mode: mode,
            ..FilterConfig::default()
        };
        let out = ssim_filter(&frames, &src, &cfg).unwrap();
        assert_eq!(out.retained, frames);
        assert!(out.removed.is_empty());
    }
}

/// 10 distinct sharp frames, 5 blurred frames, 5 exact duplicates.
fn twenty_frame_sequence() -> (Vec<vdp_core::FrameRef>, MemorySource, Vec<String>, f64) {
    let side = 32;
    let clean: Vec<GrayImage> = (0..10).map(|i| noise_frame(500 + i, side, side)).collect();
    let blurred: Vec<GrayImage> = (0..5)
        .map(|i| box_blur(&noise_frame(900 + i, side, side), 4))
        .collect();
    // c = clean, b = blurred, d = duplicate of the clean frame given
    enum K {
        C(usize),
        B(usize),
        D(usize),
    }
    use K::*;
    let layout = [
        C(0), D(0), C(1), B(0), D(1), C(2), D(2), B(1), C(3), C(4),
        B(2), D(4), C(5), C(6), B(3), C(7), D(7), C(8), B(4), C(9),
    ];
    let frames = frame_refs("s20", layout.len());
    let mut src = MemorySource::new();
    let mut clean_ids = Vec::new();
    for (f, k) in frames.iter().zip(&layout) {
        let img = match k {
            C(i) => {
                clean_ids.push(f.frame_id.clone());
                clean[*i].clone()
            }
            B(i) => blurred[*i].clone(),
            D(i) => clean[*i].clone(),
        };
        src.insert(f.frame_id.clone(), img);
    }

    // Oracle values must straddle the thresholds.
    let clean_min = clean
        .iter()
        .map(|c| vol_oracle(&rows_of(c)))
        .fold(f64::INFINITY, f64::min);
    let blur_max = blurred
        .iter()
        .map(|b| vol_oracle(&rows_of(b)))
        .fold(0.0, f64::max);
    assert!(blur_max * 4.0 < clean_min, "blur {blur_max} vs clean {clean_min}");
    for i in 0..9 {
        let s = ssim_oracle(&rows_of(&clean[i]), &rows_of(&clean[i + 1]), 7);
        assert!(s < 0.3, "clean {i} vs {} ssim {s}", i + 1);
    }
    let v = (blur_max * clean_min).sqrt();
    (frames, src, clean_ids, v)
}

#[test]
fn twenty_frame_sequence_keeps_exactly_the_clean_distinct_frames() {
    let (frames, src, clean_ids, v) = twenty_frame_sequence();
    for mode in [SsimMode::Consecutive, SsimMode::Anchor] {
        let cfg = FilterConfig {
            vol_threshold: v,
            ssim_threshold: 0.5,
            ssim_mode: mode,
            workers: 4,
            ..FilterConfig::default()
        };
        let out = run_frames("s20", &frames, &src, &cfg).unwrap();
        let kept: Vec<&str> = out.retained.iter().map(|f| f.frame_id.as_str()).collect();
        assert_eq!(kept, clean_ids.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.removed_by_vol.len(), 5);
        assert_eq!(out.removed_by_ssim.len(), 5);
        assert!(out.removed_by_ssim.iter().all(|r| (r.value - 1.0).abs() < 1e-9));
        assert!((out.removal_ratio_vol - 0.25).abs() < 1e-12);
        assert!((out.removal_ratio_ssim - 0.25).abs() < 1e-12);
        let st = out.vol_stats;
        assert!(st.min <= st.median && st.median <= st.max);
    }
}

#[test]
fn anchor_mode_retained_neighbours_stay_below_threshold() {
    for seed in 0..20 {
        let (frames, src) = random_sequence(seed);
        let cfg = FilterConfig {
            ssim_threshold: 0.6,
            ssim_mode: SsimMode::Anchor,
            ..FilterConfig::default()
        };
        let out = ssim_filter(&frames, &src, &cfg).unwrap();
        assert_eq!(out.retained[0], frames[0]);
        for pair in out.retained.windows(2) {
            let a = rows_of(&vdp_core::filter::FrameSource::load(&src, &pair[0]).unwrap());
            let b = rows_of(&vdp_core::filter::FrameSource::load(&src, &pair[1]).unwrap());
            assert!(ssim_oracle(&a, &b, 7) <= 0.6 + 1e-9);
        }
    }
}

#[test]
fn consecutive_similarities_are_worker_independent() {
    let (frames, src) = random_sequence(3);
    let one = consecutive_similarities(&frames, &src, &FilterConfig::default()).unwrap();
    let many = consecutive_similarities(
        &frames,
        &src,
        &FilterConfig {
            workers: 6,
            ..FilterConfig::default()
        },
    )
    .unwrap();
    assert_eq!(one, many);
    assert_eq!(one.len(), frames.len() - 1);
}

#[test]
fn sweep_is_monotone() {
    for seed in [1, 2, 3] {
        let (frames, src) = random_sequence(seed);
        let vs: Vec<f64> = (3..=9).map(|k| k as f64 * 100.0).collect();
        let ss: Vec<f64> = (2..=8).map(|k| k as f64 / 10.0).collect();
        for mode in [SsimMode::Consecutive, SsimMode::Anchor] {
            let cfg = FilterConfig {
                ssim_mode: mode,
                ..FilterConfig::default()
            };
            let t = sweep_frames("x", &frames, &src, &vs, &ss, &cfg).unwrap();
            assert!(t.vol.windows(2).all(|w| w[1].fraction <= w[0].fraction));
            if mode == SsimMode::Consecutive {
                assert!(t.ssim.windows(2).all(|w| w[1].fraction >= w[0].fraction));
            }
            assert_eq!(t.vol_csv().lines().count(), 8);
        }
    }
}

#[test]
fn disk_pipeline_on_constant_frames_removes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("0007");
    std::fs::create_dir(&seq).unwrap();
    for i in 0..10 {
        write_png(&GrayImage::filled(24, 16, 90.0).unwrap(), &seq.join(format!("{i:06}.png")));
    }
    let out = run_pipeline(&seq, &FilterConfig::default()).unwrap();
    assert_eq!(out.sequence_id, "0007");
    assert!(out.retained.is_empty());
    assert_eq!(out.removed_by_vol.len(), 10);
    assert_eq!(out.removal_ratio_vol, 1.0);
    assert_eq!(out.vol_stats.max, 0.0);
}

#[test]
fn disk_pipeline_orders_by_name_and_skips_corrupt_frames() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("0001");
    std::fs::create_dir(&seq).unwrap();
    for i in [2u64, 0, 1, 3] {
        write_png(&noise_frame(i, 24, 24), &seq.join(format!("{i:06}.png")));
    }
    std::fs::write(seq.join("000004.png"), b"not a png").unwrap();
    std::fs::write(seq.join("notes.txt"), b"ignored").unwrap();

    let cfg = FilterConfig {
        workers: 2,
        ..FilterConfig::default()
    };
    let out = run_pipeline(&seq, &cfg).unwrap();
    let ids: Vec<&str> = out.scores.iter().map(|s| s.frame.frame_id.as_str()).collect();
    assert_eq!(ids, ["000000", "000001", "000002", "000003"]);
    assert_eq!(out.errors.len(), 1);
    assert_eq!(out.errors[0].frame_id, "000004");
    assert_eq!(out.retained.len(), 4);

    // disk decode path equals the in-memory path after 8-bit quantization
    let direct = vdp_core::imageproc::vol(&filter::load_gray(&seq.join("000002.png")).unwrap()).unwrap();
    assert!((out.scores[2].vol - direct).abs() < 1e-9);

    let table = sweep(&seq, &[300.0, 900.0], &[0.2], &cfg).unwrap();
    assert_eq!(table.total_frames, 4);
    assert_eq!(table.errors.len(), 1);
}

#[test]
fn pipeline_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_pipeline(dir.path(), &FilterConfig::default()),
        Err(FilterError::Input(_))
    ));
    assert!(matches!(
        run_pipeline(&dir.path().join("missing"), &FilterConfig::default()),
        Err(FilterError::Input(_))
    ));
    let bad = FilterConfig {
        ssim_threshold: 1.5,
        ..FilterConfig::default()
    };
    assert!(matches!(run_pipeline(dir.path(), &bad), Err(FilterError::Config(_))));
}

#[test]
fn stack_mode_compares_mixed_sizes() {
    let frames = frame_refs("stack", 3);
    let mut src = MemorySource::new();
    src.insert(frames[0].frame_id.clone(), noise_frame(1, 30, 20));
    src.insert(frames[1].frame_id.clone(), noise_frame(1, 30, 20).center_crop(28, 18).unwrap());
    src.insert(frames[2].frame_id.clone(), noise_frame(3, 26, 22));
    let cfg = FilterConfig {
        stack_mode: true,
        ssim_threshold: 0.9,
        ..FilterConfig::default()
    };
    let out = run_frames("stack", &frames, &src, &cfg).unwrap();
    assert_eq!(out.removed_by_ssim.len(), 1);
    assert_eq!(out.removed_by_ssim[0].frame_id, "000001");
}
