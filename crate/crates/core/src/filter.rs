//! Two-step frame filter: parallel Variance-of-Laplacian scoring and
//! thresholding, then SSIM redundancy removal.
//!
//! Frames are addressed by [`FrameRef`] and pulled through a [`FrameSource`],
//! so the same code runs over image directories and synthetic in-memory
//! sequences.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{FilterError, ImageError};
use crate::imageproc::{self, GrayImage, SsimParams};
use crate::par;

pub const DEFAULT_VOL_THRESHOLD: f64 = 500.0;
pub const DEFAULT_SSIM_THRESHOLD: f64 = 0.7;

const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// One frame of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub sequence_id: String,
    pub frame_id: String,
    pub path: PathBuf,
    pub index: usize,
}

impl FrameRef {
    pub fn new(sequence_id: impl Into<String>, frame_id: impl Into<String>, index: usize) -> Self {
        let frame_id = frame_id.into();
        Self {
            sequence_id: sequence_id.into(),
            path: PathBuf::from(format!("{frame_id}.png")),
            frame_id,
            index,
        }
    }
}

/// Which frame a candidate is compared against in the SSIM step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimMode {
    /// Previous frame in the (VOL-filtered) input list.
    #[default]
    Consecutive,
    /// Most recently retained frame.
    Anchor,
}

impl fmt::Display for SsimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SsimMode::Consecutive => "consecutive",
            SsimMode::Anchor => "anchor",
        })
    }
}

impl FromStr for SsimMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consecutive" => Ok(SsimMode::Consecutive),
            "anchor" => Ok(SsimMode::Anchor),
            other => Err(format!("unknown ssim mode `{other}` (expected consecutive|anchor)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub vol_threshold: f64,
    pub ssim_threshold: f64,
    pub ssim_mode: SsimMode,
    pub workers: usize,
    /// Non-sequential input: frames of differing size are compared on
    /// their common centred crop instead of being rejected.
    pub stack_mode: bool,
    #[serde(default)]
    pub ssim: SsimParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            vol_threshold: DEFAULT_VOL_THRESHOLD,
            ssim_threshold: DEFAULT_SSIM_THRESHOLD,
            ssim_mode: SsimMode::Consecutive,
            workers: 1,
            stack_mode: false,
            ssim: SsimParams::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.vol_threshold > 0.0) || !self.vol_threshold.is_finite() {
            return Err(FilterError::Config(format!(
                "vol threshold must be > 0, got {}",
                self.vol_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.ssim_threshold) {
            return Err(FilterError::Config(format!(
                "ssim threshold must lie in [0, 1], got {}",
                self.ssim_threshold
            )));
        }
        if self.workers == 0 {
            return Err(FilterError::Config("workers must be >= 1".into()));
        }
        self.ssim
            .validate()
            .map_err(|e| FilterError::Config(e.to_string()))
    }
}

/// Where train/test designation comes from: retained frames train, removed frames test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRole {
    Train,
    Test,
}

impl fmt::Display for FrameRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameRole::Train => "train",
            FrameRole::Test => "test",
        })
    }
}

impl FromStr for FrameRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(FrameRole::Train),
            "test" => Ok(FrameRole::Test),
            other => Err(format!("unknown role `{other}` (expected train|test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalStage {
    None,
    Vol,
    Ssim,
}

impl RemovalStage {
    pub fn role(self) -> FrameRole {
        match self {
            RemovalStage::None => FrameRole::Train,
            RemovalStage::Vol | RemovalStage::Ssim => FrameRole::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub frame: FrameRef,
    pub vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub reference_frame_id: String,
    pub candidate_frame_id: String,
    pub ssim: f64,
}

/// A removed frame and the score that triggered the removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub frame_id: String,
    pub value: f64,
}

/// A frame that could not be loaded. Counted as neither retained nor removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: String,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl VolStats {
    /// Returns `None` for an empty slice.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            min: sorted[0],
            max: sorted[n - 1],
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub sequence_id: String,
    /// Every successfully scored frame, in sequence order.
    pub scores: Vec<QualityScore>,
    pub retained: Vec<FrameRef>,
    pub removed_by_vol: Vec<Removal>,
    pub removed_by_ssim: Vec<Removal>,
    pub vol_stats: VolStats,
    pub removal_ratio_vol: f64,
    pub removal_ratio_ssim: f64,
    pub errors: Vec<FrameFailure>,
    pub elapsed_seconds: f64,
}

impl FilterOutcome {
    pub fn total_frames(&self) -> usize {
        self.scores.len()
    }

    /// Stage at which each scored frame left the pipeline, with the SSIM
    /// value for SSIM removals.
    pub fn stages(&self) -> Vec<(RemovalStage, Option<f64>)> {
        let vol: HashMap<&str, f64> = self
            .removed_by_vol
            .iter()
            .map(|r| (r.frame_id.as_str(), r.value))
            .collect();
        let ssim: HashMap<&str, f64> = self
            .removed_by_ssim
            .iter()
            .map(|r| (r.frame_id.as_str(), r.value))
            .collect();
        self.scores
            .iter()
            .map(|s| {
                let id = s.frame.frame_id.as_str();
                if vol.contains_key(id) {
                    (RemovalStage::Vol, None)
                } else if let Some(v) = ssim.get(id) {
                    (RemovalStage::Ssim, Some(*v))
                } else {
                    (RemovalStage::None, None)
                }
            })
            .collect()
    }
}

/// Supplies decoded grayscale frames.
pub trait FrameSource: Sync {
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, FilterError>;
}

impl<F> FrameSource for F
where
    F: Fn(&FrameRef) -> Result<GrayImage, FilterError> + Sync,
{
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, FilterError> {
        self(frame)
    }
}

/// Decodes PNG/JPEG files from disk.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiskSource;

impl FrameSource for DiskSource {
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, FilterError> {
        load_gray(&frame.path)
    }
}

/// Frames held in memory, keyed by frame id.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    frames: HashMap<String, GrayImage>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_id: impl Into<String>, image: GrayImage) {
        self.frames.insert(frame_id.into(), image);
    }
}

impl FrameSource for MemorySource {
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, FilterError> {
        self.frames
            .get(&frame.frame_id)
            .cloned()
            .ok_or_else(|| FilterError::Decode {
                path: frame.path.clone(),
                message: format!("no in-memory frame `{}`", frame.frame_id),
            })
    }
}

/// Decodes an image file to BT.601 luminance.
pub fn load_gray(path: &Path) -> Result<GrayImage, FilterError> {
    let decoded = image::open(path).map_err(|e| FilterError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(imageproc::rgb8_to_gray(rgb.as_raw(), w as usize, h as usize)?)
}

/// Lists decodable frame files in `dir`, ordered by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<FrameRef>, FilterError> {
    if !dir.is_dir() {
        return Err(FilterError::Input(format!(
            "{} is not a readable directory",
            dir.display()
        )));
    }
    let entries = std::fs::read_dir(dir).map_err(|source| FilterError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| FilterError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_frame && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let sequence_id = sequence_id_for(dir);
    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(index, path)| FrameRef {
            sequence_id: sequence_id.clone(),
            frame_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            path,
            index,
        })
        .collect())
}

/// Sequence id is the directory's own name.
pub fn sequence_id_for(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFrames {
    pub scores: Vec<QualityScore>,
    pub errors: Vec<FrameFailure>,
}

/// Scores every frame by VOL on `workers` threads. Output order follows input
/// order. Frames that fail to load are reported in `errors`; the call fails
/// only when every frame fails.
pub fn score_frames(
    frames: &[FrameRef],
    source: &dyn FrameSource,
    workers: usize,
) -> Result<ScoredFrames, FilterError> {
    let results = par::map_ordered(frames, workers, |frame| {
        source
            .load(frame)
            .and_then(|img| imageproc::vol(&img).map_err(FilterError::from))
    });
    let mut scores = Vec::with_capacity(frames.len());
    let mut errors = Vec::new();
    for (frame, result) in frames.iter().zip(results) {
        match result {
            Ok(vol) => scores.push(QualityScore {
                frame: frame.clone(),
                vol,
            }),
            Err(err) => {
                log::warn!("skipping frame {}: {err}", frame.frame_id);
                errors.push(FrameFailure {
                    frame_id: frame.frame_id.clone(),
                    path: frame.path.clone(),
                    message: err.to_string(),
                })
            }
        }
    }
    if scores.is_empty() && !frames.is_empty() {
        return Err(FilterError::AllFramesFailed(frames.len()));
    }
    Ok(ScoredFrames { scores, errors })
}

/// Keeps frames with `vol >= threshold`, preserving order.
pub fn vol_filter(scores: &[QualityScore], threshold: f64) -> (Vec<FrameRef>, Vec<Removal>) {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for score in scores {
        if score.vol >= threshold {
            retained.push(score.frame.clone());
        } else {
            removed.push(Removal {
                frame_id: score.frame.frame_id.clone(),
                value: score.vol,
            });
        }
    }
    (retained, removed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimFiltered {
    pub retained: Vec<FrameRef>,
    pub removed: Vec<Removal>,
    /// Every comparison made, in evaluation order.
    pub comparisons: Vec<SimilarityScore>,
}

fn compare_images(
    reference: &FrameRef,
    a: &GrayImage,
    candidate: &FrameRef,
    b: &GrayImage,
    config: &FilterConfig,
) -> Result<f64, FilterError> {
    let mismatch = |source: ImageError| FilterError::Mismatch {
        reference: reference.frame_id.clone(),
        candidate: candidate.frame_id.clone(),
        source,
    };
    if a.dimensions() != b.dimensions() && config.stack_mode {
        let w = a.width().min(b.width());
        let h = a.height().min(b.height());
        let a = a.center_crop(w, h).map_err(mismatch)?;
        let b = b.center_crop(w, h).map_err(mismatch)?;
        return imageproc::ssim(&a, &b, &config.ssim).map_err(mismatch);
    }
    imageproc::ssim(a, b, &config.ssim).map_err(mismatch)
}

/// SSIM of every frame against its predecessor in `frames`, computed as a
/// parallel map over adjacent pairs.
pub fn consecutive_similarities(
    frames: &[FrameRef],
    source: &dyn FrameSource,
    config: &FilterConfig,
) -> Result<Vec<SimilarityScore>, FilterError> {
    let pairs: Vec<(&FrameRef, &FrameRef)> = frames.windows(2).map(|w| (&w[0], &w[1])).collect();
    par::map_ordered(&pairs, config.workers, |(reference, candidate)| {
        let a = source.load(reference)?;
        let b = source.load(candidate)?;
        Ok(SimilarityScore {
            reference_frame_id: reference.frame_id.clone(),
            candidate_frame_id: candidate.frame_id.clone(),
            ssim: compare_images(reference, &a, candidate, &b, config)?,
        })
    })
    .into_iter()
    .collect()
}

/// Applies the consecutive-mode threshold to precomputed similarities.
/// `similarities[i]` must compare `frames[i + 1]` with `frames[i]`.
pub fn retain_consecutive(
    frames: &[FrameRef],
    similarities: &[SimilarityScore],
    threshold: f64,
) -> (Vec<FrameRef>, Vec<Removal>) {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    if let Some(first) = frames.first() {
        retained.push(first.clone());
    }
    for (frame, sim) in frames.iter().skip(1).zip(similarities) {
        if sim.ssim > threshold {
            removed.push(Removal {
                frame_id: frame.frame_id.clone(),
                value: sim.ssim,
            });
        } else {
            retained.push(frame.clone());
        }
    }
    (retained, removed)
}

fn anchor_filter(
    frames: &[FrameRef],
    source: &dyn FrameSource,
    config: &FilterConfig,
) -> Result<SsimFiltered, FilterError> {
    let mut out = SsimFiltered {
        retained: Vec::new(),
        removed: Vec::new(),
        comparisons: Vec::new(),
    };
    let Some(first) = frames.first() else {
        return Ok(out);
    };
    let mut anchor = (first, source.load(first)?);
    out.retained.push(first.clone());
    for frame in &frames[1..] {
        let img = source.load(frame)?;
        let value = compare_images(anchor.0, &anchor.1, frame, &img, config)?;
        out.comparisons.push(SimilarityScore {
            reference_frame_id: anchor.0.frame_id.clone(),
            candidate_frame_id: frame.frame_id.clone(),
            ssim: value,
        });
        if value > config.ssim_threshold {
            out.removed.push(Removal {
                frame_id: frame.frame_id.clone(),
                value,
            });
        } else {
            out.retained.push(frame.clone());
            anchor = (frame, img);
        }
    }
    Ok(out)
}

/// Removes frames whose SSIM against their comparison target exceeds the
/// configured threshold. The first frame is always retained.
pub fn ssim_filter(
    frames: &[FrameRef],
    source: &dyn FrameSource,
    config: &FilterConfig,
) -> Result<SsimFiltered, FilterError> {
    match config.ssim_mode {
        SsimMode::Consecutive => {
            let comparisons = consecutive_similarities(frames, source, config)?;
            let (retained, removed) =
                retain_consecutive(frames, &comparisons, config.ssim_threshold);
            Ok(SsimFiltered {
                retained,
                removed,
                comparisons,
            })
        }
        SsimMode::Anchor => anchor_filter(frames, source, config),
    }
}

/// VOL filter followed by SSIM filter over an explicit frame list.
pub fn run_frames(
    sequence_id: &str,
    frames: &[FrameRef],
    source: &dyn FrameSource,
    config: &FilterConfig,
) -> Result<FilterOutcome, FilterError> {
    config.validate()?;
    if frames.is_empty() {
        return Err(FilterError::Input(format!("sequence {sequence_id} has no frames")));
    }
    let started = Instant::now();
    let scored = score_frames(frames, source, config.workers)?;
    let vols: Vec<f64> = scored.scores.iter().map(|s| s.vol).collect();
    let vol_stats = VolStats::from_values(&vols)
        .ok_or_else(|| FilterError::AllFramesFailed(frames.len()))?;

    let (vol_kept, removed_by_vol) = vol_filter(&scored.scores, config.vol_threshold);
    let ssim = ssim_filter(&vol_kept, source, config)?;

    let total = scored.scores.len() as f64;
    Ok(FilterOutcome {
        sequence_id: sequence_id.to_string(),
        removal_ratio_vol: removed_by_vol.len() as f64 / total,
        removal_ratio_ssim: ssim.removed.len() as f64 / total,
        scores: scored.scores,
        retained: ssim.retained,
        removed_by_vol,
        removed_by_ssim: ssim.removed,
        vol_stats,
        errors: scored.errors,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs the full two-step filter on a directory of frames.
pub fn run_pipeline(sequence_dir: &Path, config: &FilterConfig) -> Result<FilterOutcome, FilterError> {
    config.validate()?;
    let frames = list_frames(sequence_dir)?;
    if frames.is_empty() {
        return Err(FilterError::Input(format!(
            "{} contains no PNG/JPEG frames",
            sequence_dir.display()
        )));
    }
    run_frames(&sequence_id_for(sequence_dir), &frames, &DiskSource, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Retained fraction in `[0, 1]`.
    pub fraction: f64,
}

impl SweepPoint {
    pub fn percent(&self) -> f64 {
        self.fraction * 100.0
    }
}

/// Retention at each threshold, each filter applied on its own to the full sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub sequence_id: String,
    pub total_frames: usize,
    pub vol: Vec<SweepPoint>,
    pub ssim: Vec<SweepPoint>,
    pub errors: Vec<FrameFailure>,
}

fn points_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,percent_retained\n");
    for p in points {
        out.push_str(&format!("{},{:.1}\n", p.threshold, p.percent()));
    }
    out
}

impl SweepTable {
    pub fn vol_csv(&self) -> String {
        points_csv(&self.vol)
    }

    pub fn ssim_csv(&self) -> String {
        points_csv(&self.ssim)
    }
}

/// Threshold sweep over explicit frames.
pub fn sweep_frames(
    sequence_id: &str,
    frames: &[FrameRef],
    source: &dyn FrameSource,
    v_values: &[f64],
    s_values: &[f64],
    config: &FilterConfig,
) -> Result<SweepTable, FilterError> {
    if frames.is_empty() {
        return Err(FilterError::Input(format!("sequence {sequence_id} has no frames")));
    }
    if let Some(v) = v_values.iter().find(|v| !(**v >= 0.0)) {
        return Err(FilterError::Config(format!("vol threshold must be >= 0, got {v}")));
    }
    if let Some(s) = s_values.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(FilterError::Config(format!("ssim threshold must lie in [0, 1], got {s}")));
    }
    let scored = score_frames(frames, source, config.workers.max(1))?;
    let total = scored.scores.len();
    let fraction = |kept: usize| kept as f64 / total as f64;

    let vol = v_values
        .iter()
        .map(|&v| SweepPoint {
            threshold: v,
            fraction: fraction(scored.scores.iter().filter(|s| s.vol >= v).count()),
        })
        .collect();

    let usable: Vec<FrameRef> = scored.scores.iter().map(|s| s.frame.clone()).collect();
    let ssim = if s_values.is_empty() {
        Vec::new()
    } else {
        match config.ssim_mode {
            SsimMode::Consecutive => {
                let sims = consecutive_similarities(&usable, source, config)?;
                s_values
                    .iter()
                    .map(|&s| SweepPoint {
                        threshold: s,
                        fraction: fraction(retain_consecutive(&usable, &sims, s).0.len()),
                    })
                    .collect()
            }
            SsimMode::Anchor => s_values
                .iter()
                .map(|&s| {
                    let cfg = FilterConfig {
                        ssim_threshold: s,
                        ..config.clone()
                    };
                    anchor_filter(&usable, source, &cfg).map(|r| SweepPoint {
                        threshold: s,
                        fraction: fraction(r.retained.len()),
                    })
                })
                .collect::<Result<_, _>>()?,
        }
    };
    Ok(SweepTable {
        sequence_id: sequence_id.to_string(),
        total_frames: total,
        vol,
        ssim,
        errors: scored.errors,
    })
}

/// Threshold sweep over a directory of frames.
pub fn sweep(
    sequence_dir: &Path,
    v_values: &[f64],
    s_values: &[f64],
    config: &FilterConfig,
) -> Result<SweepTable, FilterError> {
    let frames = list_frames(sequence_dir)?;
    if frames.is_empty() {
        return Err(FilterError::Input(format!(
            "{} contains no PNG/JPEG frames",
            sequence_dir.display()
        )));
    }
    sweep_frames(
        &sequence_id_for(sequence_dir),
        &frames,
        &DiskSource,
        v_values,
        s_values,
        config,
    )
}
