use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use vdp_core::detection::{DetectorConfig, DetectorSource, ServicePayload};
use vdp_core::filter::{run_pipeline, sequence_id_for, sweep as run_sweep, FrameFailure};
use vdp_core::manifest::{self, load_manifests, read_manifest, write_manifest};
use vdp_core::monitor::{self, drift_check, expose_metrics, BatchMetrics, DriftPolicy};
use vdp_core::scene::{tag_frames, TaggedFrame};
use vdp_core::{
    DetectionError, Detector, FilterConfig, FilterError, FrameRef, FrameRole, ManifestError,
    MonitorError, Query, SceneCategory, SceneError, SceneRules, SequenceManifest, SsimMode,
    SsimParams,
};

use crate::range::parse_thresholds;
use crate::{
    DetectorArgs, FilterArgs, FormatArg, InputMode, ModeArg, PayloadArg, QueryArgs, ReportArgs,
    RoleArg, ScoringArgs, SweepArgs, TagArgs, WindowArg,
};

const CONFIG: u8 = 2;
const INPUT: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: CONFIG, message: message.into() }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: INPUT, message: message.into() }
}

impl From<FilterError> for Failure {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::Config(_) => config_error(e.to_string()),
            _ => input_error(e.to_string()),
        }
    }
}

impl From<DetectionError> for Failure {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::Config(_) => config_error(e.to_string()),
            _ => input_error(e.to_string()),
        }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Rules(_) => config_error(e.to_string()),
            SceneError::Argument(_) => input_error(e.to_string()),
        }
    }
}

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Query(_) => config_error(e.to_string()),
            _ => input_error(e.to_string()),
        }
    }
}

impl From<MonitorError> for Failure {
    fn from(e: MonitorError) -> Self {
        config_error(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    input_error(format!("i/o error on {}: {e}", path.display()))
}

/// Where the human summary goes: stdout normally, stderr when stdout carries an artifact.
fn emit_summary(text: &str, to_stderr: bool) {
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}

fn emit_stdout(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| input_error(format!("writing to stdout: {e}")))
}

fn workers(requested: Option<usize>) -> Result<usize, Failure> {
    match requested {
        Some(0) => Err(config_error("--workers must be >= 1")),
        Some(n) => Ok(n),
        None => Ok(vdp_core::par::default_workers()),
    }
}

fn filter_config(vol: f64, ssim: f64, scoring: &ScoringArgs) -> Result<FilterConfig, Failure> {
    let config = FilterConfig {
        vol_threshold: vol,
        ssim_threshold: ssim,
        ssim_mode: match scoring.ssim_mode {
            ModeArg::Consecutive => SsimMode::Consecutive,
            ModeArg::Anchor => SsimMode::Anchor,
        },
        workers: workers(scoring.workers)?,
        stack_mode: scoring.mode == InputMode::Stack,
        ssim: match scoring.ssim_window {
            WindowArg::Uniform => SsimParams::default(),
            WindowArg::Gaussian => SsimParams::gaussian(),
        },
    };
    config.validate()?;
    Ok(config)
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input_error(format!("{} is not a readable directory", path.display())))
    }
}

fn load_rules(args: &DetectorArgs) -> Result<SceneRules, Failure> {
    match &args.rules {
        Some(path) => Ok(SceneRules::load(path)?),
        None => Ok(SceneRules::default()),
    }
}

fn check_objectness(args: &DetectorArgs) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&args.min_objectness) {
        Ok(())
    } else {
        Err(config_error(format!(
            "--min-objectness must lie in [0, 1], got {}",
            args.min_objectness
        )))
    }
}

/// Detection source for one sequence, if any was given. A labels directory
/// resolves to `<dir>/<sequence>.txt`.
fn detector_config(args: &DetectorArgs, sequence_id: &str) -> Result<Option<DetectorConfig>, Failure> {
    check_objectness(args)?;
    let source = if let Some(labels) = &args.labels {
        let file = if labels.is_dir() {
            labels.join(format!("{sequence_id}.txt"))
        } else {
            labels.clone()
        };
        DetectorSource::KittiLabels(file)
    } else if let Some(path) = &args.detections {
        DetectorSource::JsonFile(path.clone())
    } else if let Some(url) = &args.detector_url {
        if !(args.detector_timeout > 0.0 && args.detector_timeout.is_finite()) {
            return Err(config_error("--detector-timeout must be > 0"));
        }
        DetectorSource::Service {
            endpoint: url.clone(),
            timeout: Duration::from_secs_f64(args.detector_timeout),
            payload: match args.detector_payload {
                PayloadArg::Path => ServicePayload::ImagePath,
                PayloadArg::Png => ServicePayload::PngBytes,
            },
        }
    } else {
        return Ok(None);
    };
    let config = DetectorConfig {
        min_objectness: args.min_objectness,
        source,
    };
    config.validate()?;
    Ok(Some(config))
}

/// Scenes for `frames` plus pooled mean objectness. Without a detection
/// source every frame is `Unknown`.
fn detect_scenes(
    frames: &[FrameRef],
    detector: Option<DetectorConfig>,
    rules: &SceneRules,
    workers: usize,
) -> Result<(Vec<SceneCategory>, f64), Failure> {
    let Some(config) = detector else {
        return Ok((vec![SceneCategory::Unknown; frames.len()], 0.0));
    };
    let detector = Detector::new(config)?;
    let tagged: Vec<TaggedFrame> = tag_frames(frames, rules, workers, |f| detector.fetch(f))?;
    let mean = monitor::mean_objectness(tagged.iter().map(|t| t.detections.as_slice()));
    Ok((tagged.iter().map(|t| t.scene).collect(), mean))
}

fn summarize_errors(out: &mut String, errors: &[FrameFailure]) {
    if errors.is_empty() {
        return;
    }
    let _ = writeln!(out, "frame errors:    {}", errors.len());
    for e in errors.iter().take(5) {
        let _ = writeln!(out, "  {}: {}", e.frame_id, e.message);
    }
    if errors.len() > 5 {
        let _ = writeln!(out, "  ... {} more", errors.len() - 5);
    }
}

fn manifest_target(out: &Path, manifest: &SequenceManifest) -> PathBuf {
    let as_dir = out.is_dir() || out.as_os_str().to_string_lossy().ends_with('/');
    if as_dir {
        out.join(manifest.file_name())
    } else {
        out.to_path_buf()
    }
}

fn write_to(path: &Path, manifest: &SequenceManifest) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    Ok(write_manifest(manifest, path)?)
}

pub fn filter(a: FilterArgs) -> Result<(), Failure> {
    let config = filter_config(a.vol, a.ssim, &a.scoring)?;
    let sequence_id = sequence_id_for(&a.input);
    let detector = detector_config(&a.detector, &sequence_id)?;
    let rules = load_rules(&a.detector)?;
    require_dir(&a.input)?;

    let outcome = run_pipeline(&a.input, &config)?;
    let frames: Vec<FrameRef> = outcome.scores.iter().map(|s| s.frame.clone()).collect();
    let tagged_by = detector.as_ref().map(|d| format!("{:?}", d.source));
    let (scenes, mean_objectness) = detect_scenes(&frames, detector, &rules, config.workers)?;
    let manifest = SequenceManifest::build(&outcome, &config, &scenes, mean_objectness, chrono::Utc::now())?;

    let target = match &a.out {
        Some(out) => {
            let path = manifest_target(out, &manifest);
            write_to(&path, &manifest)?;
            Some(path)
        }
        None => None,
    };
    if a.stdout {
        emit_stdout(&manifest.to_yaml()?)?;
    }

    let total = outcome.total_frames();
    let pct = |n: usize| if total == 0 { 0.0 } else { n as f64 * 100.0 / total as f64 };
    let mut s = String::new();
    let _ = writeln!(s, "sequence:        {}", outcome.sequence_id);
    let _ = writeln!(s, "frames scored:   {total}");
    let _ = writeln!(s, "retained:        {} ({:.1}%)", outcome.retained.len(), pct(outcome.retained.len()));
    let _ = writeln!(
        s,
        "removed by vol:  {} ({:.1}%)",
        outcome.removed_by_vol.len(),
        outcome.removal_ratio_vol * 100.0
    );
    let _ = writeln!(
        s,
        "removed by ssim: {} ({:.1}%)",
        outcome.removed_by_ssim.len(),
        outcome.removal_ratio_ssim * 100.0
    );
    let v = outcome.vol_stats;
    let _ = writeln!(s, "vol min/median/max: {:.1} / {:.1} / {:.1}", v.min, v.median, v.max);
    summarize_errors(&mut s, &outcome.errors);
    match tagged_by {
        Some(_) => {
            let _ = writeln!(s, "scene:           {}", manifest.sequence_scene);
            let _ = writeln!(s, "mean objectness: {:.4}", manifest.mean_objectness);
        }
        None => {
            let _ = writeln!(s, "scene:           {} (no detection source given)", manifest.sequence_scene);
        }
    }
    let _ = writeln!(s, "elapsed:         {:.2} s", outcome.elapsed_seconds);
    if let Some(path) = target {
        let _ = writeln!(s, "manifest:        {}", path.display());
    }
    emit_summary(&s, a.stdout);
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let parse = |flag: &str, value: &Option<String>| -> Result<Vec<f64>, Failure> {
        value.as_deref()
            .map(parse_thresholds)
            .transpose()
            .map(Option::unwrap_or_default)
            .map_err(|e| config_error(format!("--{flag}: {e}")))
    };
    let (mut vols, mut ssims) = (parse("vol", &a.vol)?, parse("ssim", &a.ssim)?);
    if vols.is_empty() && ssims.is_empty() {
        vols = parse_thresholds("300:900:100").expect("static range");
        ssims = parse_thresholds("0.2:0.8:0.1").expect("static range");
    }
    let config = filter_config(
        vdp_core::filter::DEFAULT_VOL_THRESHOLD,
        vdp_core::filter::DEFAULT_SSIM_THRESHOLD,
        &a.scoring,
    )?;
    if let Some(v) = vols.iter().find(|v| **v < 0.0) {
        return Err(config_error(format!("--vol thresholds must be >= 0, got {v}")));
    }
    if let Some(s) = ssims.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(config_error(format!("--ssim thresholds must lie in [0, 1], got {s}")));
    }
    require_dir(&a.input)?;

    let table = run_sweep(&a.input, &vols, &ssims, &config)?;
    let mut artifacts: Vec<(&str, String)> = Vec::new();
    if !table.vol.is_empty() {
        artifacts.push(("vol", table.vol_csv()));
    }
    if !table.ssim.is_empty() {
        artifacts.push(("ssim", table.ssim_csv()));
    }

    let mut s = String::new();
    let _ = writeln!(s, "sequence: {} ({} frames)", table.sequence_id, table.total_frames);
    for (name, points) in [("vol", &table.vol), ("ssim", &table.ssim)] {
        if points.is_empty() {
            continue;
        }
        let header: Vec<String> = points.iter().map(|p| format!("{:>7}", p.threshold)).collect();
        let row: Vec<String> = points.iter().map(|p| format!("{:>6.1}%", p.percent())).collect();
        let _ = writeln!(s, "{name:<5}{}", header.join(" "));
        let _ = writeln!(s, "{:<5}{}", "", row.join(" "));
    }
    summarize_errors(&mut s, &table.errors);

    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        for (name, csv) in &artifacts {
            let path = dir.join(format!("{}.{name}.csv", table.sequence_id));
            std::fs::write(&path, csv).map_err(|e| io_failure(&path, e))?;
            let _ = writeln!(s, "wrote {}", path.display());
        }
    }
    if a.stdout {
        let joined: Vec<&str> = artifacts.iter().map(|(_, csv)| csv.as_str()).collect();
        emit_stdout(&joined.join("\n"))?;
    }
    emit_summary(&s, a.stdout);
    Ok(())
}

fn manifest_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_dir() {
        Ok(manifest::manifest_paths(input)?)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        Err(input_error(format!("{} does not exist", input.display())))
    }
}

pub fn tag(a: TagArgs) -> Result<(), Failure> {
    check_objectness(&a.detector)?;
    if a.detector.labels.is_none() && a.detector.detections.is_none() && a.detector.detector_url.is_none() {
        return Err(config_error("tag needs one of --labels, --detections or --detector-url"));
    }
    let workers = workers(a.workers)?;
    let rules = load_rules(&a.detector)?;
    let paths = manifest_inputs(&a.input)?;
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    }

    let mut s = String::new();
    for path in paths {
        let mut m = read_manifest(&path)?;
        let frames: Vec<FrameRef> = m
            .frames
            .iter()
            .map(|f| FrameRef {
                sequence_id: m.sequence_id.clone(),
                frame_id: f.frame_id.clone(),
                path: f.path.clone(),
                index: f.index,
            })
            .collect();
        let detector = detector_config(&a.detector, &m.sequence_id)?;
        let (scenes, mean) = detect_scenes(&frames, detector, &rules, workers)?;
        m.retag(&scenes)?;
        m.mean_objectness = mean;
        let target = match &a.out {
            Some(dir) => dir.join(m.file_name()),
            None => path.clone(),
        };
        write_to(&target, &m)?;
        let _ = writeln!(s, "{}: {} -> {}", m.sequence_id, m.sequence_scene, target.display());
    }
    emit_summary(&s, false);
    Ok(())
}

pub fn query(a: QueryArgs) -> Result<(), Failure> {
    let scenes: Vec<SceneCategory> = if a.scenes.is_empty() {
        SceneCategory::ALL.to_vec()
    } else {
        a.scenes
            .iter()
            .map(|s| s.parse().map_err(|e: String| config_error(e)))
            .collect::<Result<_, _>>()?
    };
    let mut q = Query::new(scenes);
    if let Some(role) = a.role {
        q = q.with_role(match role {
            RoleArg::Train => FrameRole::Train,
            RoleArg::Test => FrameRole::Test,
        });
    }
    if let Some(v) = a.min_vol {
        if !v.is_finite() {
            return Err(config_error("--min-vol must be finite"));
        }
        q = q.with_min_vol(v);
    }
    require_dir(&a.input)?;
    let result = manifest::query(&a.input, &q)?;
    let text = match a.format {
        FormatArg::Csv => result.to_csv(),
        FormatArg::Jsonl => result.to_jsonl(),
    };

    let mut s = String::new();
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "{} matching frames", result.rows.len());
    match &a.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| io_failure(path, e))?;
            let _ = writeln!(s, "wrote {}", path.display());
            emit_summary(&s, false);
        }
        None => {
            emit_stdout(&text)?;
            emit_summary(&s, true);
        }
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), Failure> {
    let policy = match (a.baseline_objectness, a.baseline_seconds_per_frame) {
        (Some(obj), Some(spf)) => {
            let p = DriftPolicy::new(obj, spf);
            p.validate()?;
            Some(p)
        }
        _ => None,
    };
    require_dir(&a.input)?;
    let (manifests, warnings) = load_manifests(&a.input)?;

    let mut frames = 0usize;
    let mut retained = 0usize;
    let mut by_vol = 0usize;
    let mut by_ssim = 0usize;
    let mut failed = 0usize;
    let mut elapsed = 0.0f64;
    let mut scenes: BTreeMap<SceneCategory, usize> = SceneCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut sequence_scenes: BTreeMap<SceneCategory, usize> = BTreeMap::new();
    for m in &manifests {
        frames += m.frame_count;
        retained += m.count_stage(vdp_core::RemovalStage::None);
        by_vol += m.count_stage(vdp_core::RemovalStage::Vol);
        by_ssim += m.count_stage(vdp_core::RemovalStage::Ssim);
        failed += m.errors.len();
        elapsed += m.elapsed_seconds;
        for f in &m.frames {
            *scenes.entry(f.scene).or_default() += 1;
        }
        *sequence_scenes.entry(m.sequence_scene).or_default() += 1;
    }

    let pct = |n: usize| if frames == 0 { 0.0 } else { n as f64 * 100.0 / frames as f64 };
    let mut s = String::new();
    for w in &warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "sequences:       {}", manifests.len());
    let _ = writeln!(s, "frames in:       {frames}");
    let _ = writeln!(s, "retained:        {retained} ({:.1}%)", pct(retained));
    let _ = writeln!(s, "removed by vol:  {by_vol} ({:.1}%)", pct(by_vol));
    let _ = writeln!(s, "removed by ssim: {by_ssim} ({:.1}%)", pct(by_ssim));
    if failed > 0 {
        let _ = writeln!(s, "unreadable:      {failed}");
    }
    let _ = writeln!(s, "total elapsed:   {elapsed:.2} s");
    let _ = writeln!(s, "frame scenes:");
    for (cat, n) in &scenes {
        let _ = writeln!(s, "  {:<18} {n:>7} ({:.2}%)", cat.as_str(), pct(*n));
    }
    if !sequence_scenes.is_empty() {
        let _ = writeln!(s, "sequence scenes:");
        for (cat, n) in &sequence_scenes {
            let _ = writeln!(s, "  {:<18} {n:>7}", cat.as_str());
        }
    }

    let mut batches = Vec::new();
    for m in &manifests {
        match BatchMetrics::new(m.sequence_id.clone(), m.frame_count, m.elapsed_seconds, m.mean_objectness) {
            Ok(b) => batches.push(b),
            Err(e) => {
                let _ = writeln!(s, "warning: no metrics for {}: {e}", m.sequence_id);
            }
        }
    }
    if let Some(policy) = &policy {
        let _ = writeln!(s, "drift:");
        for b in &batches {
            match drift_check(b, policy) {
                monitor::Verdict::Ok => {
                    let _ = writeln!(s, "  {}: ok", b.batch_id);
                }
                monitor::Verdict::Drift(reasons) => {
                    let reasons: Vec<String> = reasons.iter().map(ToString::to_string).collect();
                    let _ = writeln!(s, "  {}: drift ({})", b.batch_id, reasons.join("; "));
                }
            }
        }
    }

    if a.metrics {
        let exposition = expose_metrics(&batches);
        match &a.out {
            Some(path) => {
                std::fs::write(path, &exposition).map_err(|e| io_failure(path, e))?;
                let _ = writeln!(s, "metrics written to {}", path.display());
            }
            None => s.push_str(&exposition),
        }
    }
    emit_summary(&s, false);
    Ok(())
}
