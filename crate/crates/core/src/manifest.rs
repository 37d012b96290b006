//! Per-sequence YAML manifests and tag-based retrieval across them.
//!
//! One manifest per sequence, named `<sequence_id>.manifest.yaml`. Field
//! order in the file follows struct declaration order so repeated writes of
//! the same manifest are byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ManifestError;
use crate::filter::{FilterConfig, FilterOutcome, FrameFailure, FrameRole, RemovalStage, VolStats};
use crate::scene::{self, SceneCategory};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SUFFIX: &str = ".manifest.yaml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: String,
    pub index: usize,
    pub path: PathBuf,
    pub vol: f64,
    pub role: FrameRole,
    pub removal_stage: RemovalStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub scene: SceneCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub schema_version: u32,
    pub sequence_id: String,
    pub created_at: DateTime<Utc>,
    pub config: FilterConfig,
    pub frame_count: usize,
    pub vol_stats: VolStats,
    pub frames: Vec<FrameEntry>,
    pub sequence_scene: SceneCategory,
    pub histogram: BTreeMap<SceneCategory, f64>,
    pub removal_ratio_vol: f64,
    pub removal_ratio_ssim: f64,
    /// Mean detection score over all frames; 0 when there were no detections.
    pub mean_objectness: f64,
    pub elapsed_seconds: f64,
    #[serde(default)]
    pub errors: Vec<FrameFailure>,
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Validation {
        key: key.into(),
        message: message.into(),
    }
}

impl SequenceManifest {
    /// Assembles a manifest from a filter run and one scene per scored frame.
    pub fn build(
        outcome: &FilterOutcome,
        config: &FilterConfig,
        scenes: &[SceneCategory],
        mean_objectness: f64,
        created_at: DateTime<Utc>,
    ) -> Result<Self, ManifestError> {
        if scenes.len() != outcome.scores.len() {
            return Err(invalid(
                "frames",
                format!(
                    "{} scenes supplied for {} frames",
                    scenes.len(),
                    outcome.scores.len()
                ),
            ));
        }
        let frames: Vec<FrameEntry> = outcome
            .scores
            .iter()
            .zip(outcome.stages())
            .zip(scenes)
            .map(|((score, (stage, ssim)), scene)| FrameEntry {
                frame_id: score.frame.frame_id.clone(),
                index: score.frame.index,
                path: score.frame.path.clone(),
                vol: score.vol,
                role: stage.role(),
                removal_stage: stage,
                ssim,
                scene: *scene,
            })
            .collect();
        let mut manifest = Self {
            schema_version: SCHEMA_VERSION,
            sequence_id: outcome.sequence_id.clone(),
            created_at,
            config: config.clone(),
            frame_count: frames.len(),
            vol_stats: outcome.vol_stats,
            frames,
            sequence_scene: SceneCategory::Unknown,
            histogram: BTreeMap::new(),
            removal_ratio_vol: outcome.removal_ratio_vol,
            removal_ratio_ssim: outcome.removal_ratio_ssim,
            mean_objectness,
            elapsed_seconds: outcome.elapsed_seconds,
            errors: outcome.errors.clone(),
        };
        manifest.retag(scenes)?;
        Ok(manifest)
    }

    /// Replaces per-frame scenes and recomputes the histogram and sequence scene.
    pub fn retag(&mut self, scenes: &[SceneCategory]) -> Result<(), ManifestError> {
        if scenes.len() != self.frames.len() {
            return Err(invalid("frames", "scene count does not match frame count"));
        }
        for (f, s) in self.frames.iter_mut().zip(scenes) {
            f.scene = *s;
        }
        let (counts, histogram) = scene::histogram(scenes);
        self.histogram = histogram;
        self.sequence_scene = scene::dominant_category(&counts);
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}{MANIFEST_SUFFIX}", self.sequence_id)
    }

    pub fn count_stage(&self, stage: RemovalStage) -> usize {
        self.frames.iter().filter(|f| f.removal_stage == stage).count()
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.sequence_id.is_empty() {
            return Err(invalid("sequence_id", "must not be empty"));
        }
        if self.frame_count != self.frames.len() {
            return Err(invalid(
                "frame_count",
                format!("{} but {} frames listed", self.frame_count, self.frames.len()),
            ));
        }
        let mut ids = HashSet::new();
        for (i, f) in self.frames.iter().enumerate() {
            if !ids.insert(f.frame_id.as_str()) {
                return Err(invalid(format!("frames[{i}].frame_id"), format!("duplicate `{}`", f.frame_id)));
            }
            if !(f.vol >= 0.0) || !f.vol.is_finite() {
                return Err(invalid(format!("frames[{i}].vol"), format!("{} is not a finite value >= 0", f.vol)));
            }
            if f.role != f.removal_stage.role() {
                return Err(invalid(
                    format!("frames[{i}].role"),
                    format!("role {} contradicts removal_stage {:?}", f.role, f.removal_stage),
                ));
            }
            match (f.removal_stage, f.ssim) {
                (RemovalStage::Ssim, None) => {
                    return Err(invalid(format!("frames[{i}].ssim"), "required when removal_stage is ssim"))
                }
                (RemovalStage::Ssim, Some(s)) if !(-1.0..=1.0).contains(&s) => {
                    return Err(invalid(format!("frames[{i}].ssim"), format!("{s} outside [-1, 1]")))
                }
                (RemovalStage::None | RemovalStage::Vol, Some(_)) => {
                    return Err(invalid(format!("frames[{i}].ssim"), "only allowed when removal_stage is ssim"))
                }
                _ => {}
            }
        }
        let s = &self.vol_stats;
        if !(s.min <= s.median && s.median <= s.max) {
            return Err(invalid("vol_stats", "expected min <= median <= max"));
        }
        let n = self.frames.len().max(1) as f64;
        for (key, ratio, stage) in [
            ("removal_ratio_vol", self.removal_ratio_vol, RemovalStage::Vol),
            ("removal_ratio_ssim", self.removal_ratio_ssim, RemovalStage::Ssim),
        ] {
            let expected = self.count_stage(stage) as f64 / n;
            if (ratio - expected).abs() > 1e-9 {
                return Err(invalid(key, format!("{ratio} but frames give {expected}")));
            }
        }
        if !self.frames.is_empty() {
            let sum: f64 = self.histogram.values().sum();
            if (sum - 100.0).abs() > 0.01 {
                return Err(invalid("histogram", format!("percentages sum to {sum}")));
            }
        }
        if !(0.0..=1.0).contains(&self.mean_objectness) {
            return Err(invalid("mean_objectness", "must lie in [0, 1]"));
        }
        if !(self.elapsed_seconds >= 0.0) {
            return Err(invalid("elapsed_seconds", "must be >= 0"));
        }
        Ok(())
    }

    pub fn to_yaml(&self) -> Result<String, ManifestError> {
        serde_yaml::to_string(self).map_err(|e| invalid("<root>", e.to_string()))
    }

    /// Parses and validates a manifest document.
    pub fn from_yaml(text: &str, origin: &Path) -> Result<Self, ManifestError> {
        // Syntax first, so malformed documents are told apart from schema violations.
        serde_yaml::from_str::<serde_yaml::Value>(text).map_err(|e| ManifestError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let manifest: Self = serde_yaml::from_str(text).map_err(|e| {
            let message = e.to_string();
            if message.contains("missing field") {
                // Required keys absent: the document was cut short.
                return ManifestError::Parse {
                    path: origin.to_path_buf(),
                    message,
                };
            }
            match message.split_once(": ") {
                Some((key, rest)) if !key.contains(' ') => invalid(key, rest),
                _ => invalid("<root>", message),
            }
        })?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Writes the manifest atomically (temporary file in the same directory, then rename).
pub fn write_manifest(manifest: &SequenceManifest, path: &Path) -> Result<(), ManifestError> {
    manifest.validate()?;
    let text = manifest.to_yaml()?;
    let io = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<SequenceManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SequenceManifest::from_yaml(&text, path)
}

/// Frame selection over manifests. Matches per-frame scene tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub scenes: BTreeSet<SceneCategory>,
    pub role: Option<FrameRole>,
    pub min_vol: Option<f64>,
}

impl Query {
    pub fn new(scenes: impl IntoIterator<Item = SceneCategory>) -> Self {
        Self {
            scenes: scenes.into_iter().collect(),
            role: None,
            min_vol: None,
        }
    }

    pub fn with_role(mut self, role: FrameRole) -> Self {
        self.role = Some(role);
        self
    }

    pub fn with_min_vol(mut self, min_vol: f64) -> Self {
        self.min_vol = Some(min_vol);
        self
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.scenes.is_empty() {
            return Err(ManifestError::Query("at least one scene is required".into()));
        }
        Ok(())
    }

    pub fn matches(&self, frame: &FrameEntry) -> bool {
        self.scenes.contains(&frame.scene)
            && self.role.map_or(true, |r| frame.role == r)
            && self.min_vol.map_or(true, |v| frame.vol >= v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRow {
    pub sequence_id: String,
    pub frame_id: String,
    pub path: PathBuf,
    pub scene: SceneCategory,
    #[serde(skip)]
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    pub rows: Vec<QueryRow>,
    pub warnings: Vec<String>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl QueryResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence_id,frame_id,path,scene\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&r.sequence_id),
                csv_field(&r.frame_id),
                csv_field(&r.path.to_string_lossy()),
                r.scene
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }
}

/// Runs a query over already-loaded manifests. Rows are ordered by
/// sequence id, then frame index.
pub fn query_manifests(manifests: &[SequenceManifest], q: &Query) -> Vec<QueryRow> {
    let mut rows: Vec<QueryRow> = manifests
        .iter()
        .flat_map(|m| {
            m.frames.iter().filter(|f| q.matches(f)).map(|f| QueryRow {
                sequence_id: m.sequence_id.clone(),
                frame_id: f.frame_id.clone(),
                path: f.path.clone(),
                scene: f.scene,
                index: f.index,
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.sequence_id
            .cmp(&b.sequence_id)
            .then(a.index.cmp(&b.index))
            .then(a.frame_id.cmp(&b.frame_id))
    });
    rows
}

/// Manifest files in `dir`, sorted by name.
pub fn manifest_paths(dir: &Path) -> Result<Vec<PathBuf>, ManifestError> {
    let io = |source| ManifestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_manifest = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(MANIFEST_SUFFIX));
        if is_manifest && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every manifest in `dir`; unreadable ones become warnings.
pub fn load_manifests(dir: &Path) -> Result<(Vec<SequenceManifest>, Vec<String>), ManifestError> {
    let mut manifests = Vec::new();
    let mut warnings = Vec::new();
    for path in manifest_paths(dir)? {
        match read_manifest(&path) {
            Ok(m) => manifests.push(m),
            Err(e) => {
                log::warn!("skipping manifest: {e}");
                warnings.push(e.to_string());
            }
        }
    }
    Ok((manifests, warnings))
}

pub fn query(manifest_dir: &Path, q: &Query) -> Result<QueryResult, ManifestError> {
    q.validate()?;
    let (manifests, warnings) = load_manifests(manifest_dir)?;
    Ok(QueryResult {
        rows: query_manifests(&manifests, q),
        warnings,
    })
}
