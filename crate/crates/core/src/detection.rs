//! Per-frame object detections: KITTI tracking label files, detection JSON,
//! and an HTTP detector service, all funnelled through the objectness floor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::DetectionError;
use crate::filter::FrameRef;

pub const DEFAULT_MIN_OBJECTNESS: f64 = 0.1;
pub const DEFAULT_SERVICE_TIMEOUT: Duration = Duration::from_secs(5);
const SERVICE_ATTEMPTS: u32 = 3;
const SERVICE_BACKOFF: Duration = Duration::from_millis(100);

/// Frame number to detections. Frames without lines map to empty lists.
pub type DetectionMap = BTreeMap<u32, Vec<Detection>>;

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self, DetectionError> {
        if !(left < right && top < bottom) {
            return Err(DetectionError::Invalid(format!(
                "bbox [{left}, {top}, {right}, {bottom}] needs left < right and top < bottom"
            )));
        }
        Ok(Self {
            left,
            top,
            right,
            bottom,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection", into = "RawDetection")]
pub struct Detection {
    pub label: String,
    /// Objectness in `[0, 1]`; 1.0 for ground-truth labels.
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    label: String,
    score: f64,
    bbox: [f64; 4],
}

impl TryFrom<RawDetection> for Detection {
    type Error = DetectionError;

    fn try_from(raw: RawDetection) -> Result<Self, Self::Error> {
        let [l, t, r, b] = raw.bbox;
        Detection::new(raw.label, raw.score, BBox::new(l, t, r, b)?)
    }
}

impl From<Detection> for RawDetection {
    fn from(d: Detection) -> Self {
        RawDetection {
            label: d.label,
            score: d.score,
            bbox: [d.bbox.left, d.bbox.top, d.bbox.right, d.bbox.bottom],
        }
    }
}

impl Detection {
    pub fn new(label: impl Into<String>, score: f64, bbox: BBox) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectionError::Invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            label: label.into(),
            score,
            bbox,
        })
    }
}

/// Which KITTI classes normally dropped by the parser to keep.
#[derive(Debug, Clone, Default)]
pub struct KittiParseOptions {
    pub keep_dont_care: bool,
}

/// Parses a KITTI tracking label file.
///
/// Each line holds `frame track_id type truncated occluded alpha left top
/// right bottom h w l x y z rotation_y [score]`. `DontCare` lines are
/// skipped unless whitelisted.
pub fn parse_kitti_tracking_labels(
    text: &str,
    options: &KittiParseOptions,
) -> Result<DetectionMap, DetectionError> {
    let mut map = DetectionMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 17 && fields.len() != 18 {
            return Err(DetectionError::Malformed {
                line: line_no,
                message: format!("expected 17 or 18 fields, found {}", fields.len()),
            });
        }
        let frame: u32 = fields[0].parse().map_err(|_| DetectionError::Malformed {
            line: line_no,
            message: format!("frame `{}` is not an integer", fields[0]),
        })?;
        let entry = map.entry(frame).or_default();
        let label = fields[2];
        if label == "DontCare" && !options.keep_dont_care {
            continue;
        }
        let num = |idx: usize, name: &str| -> Result<f64, DetectionError> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DetectionError::Malformed {
                    line: line_no,
                    message: format!("{name} `{}` is not numeric", fields[idx]),
                })
        };
        let bbox = BBox::new(
            num(6, "bbox_left")?,
            num(7, "bbox_top")?,
            num(8, "bbox_right")?,
            num(9, "bbox_bottom")?,
        )
        .map_err(|e| DetectionError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let score = if fields.len() == 18 { num(17, "score")? } else { 1.0 };
        let det = Detection::new(label, score, bbox).map_err(|e| DetectionError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        entry.push(det);
    }
    if let Some(&last) = map.keys().next_back() {
        for frame in 0..last {
            map.entry(frame).or_default();
        }
    }
    Ok(map)
}

/// Writes a detection map in KITTI tracking layout. 3-D fields are zeroed,
/// track ids are per-frame positions, and the score column is written
/// whenever it differs from 1.0.
pub fn write_kitti_tracking_labels(map: &DetectionMap) -> String {
    let mut out = String::new();
    for (frame, dets) in map {
        for (track, d) in dets.iter().enumerate() {
            let _ = write!(
                out,
                "{frame} {track} {} 0 0 0 {} {} {} {} 0 0 0 0 0 0 0",
                d.label, d.bbox.left, d.bbox.top, d.bbox.right, d.bbox.bottom
            );
            if d.score != 1.0 {
                let _ = write!(out, " {}", d.score);
            }
            out.push('\n');
        }
    }
    out
}

/// Parses a detection JSON array; invariant violations are protocol errors.
pub fn parse_detection_json(text: &str) -> Result<Vec<Detection>, DetectionError> {
    serde_json::from_str(text).map_err(|e| DetectionError::Protocol(e.to_string()))
}

/// Keeps detections with `score > floor`, in order.
pub fn filter_by_objectness(dets: &[Detection], floor: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score > floor).cloned().collect()
}

/// Request body shape for the detector service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServicePayload {
    /// `{"image_path": "..."}` as JSON.
    #[default]
    ImagePath,
    /// Raw file bytes with `content-type: image/png`.
    PngBytes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSource {
    KittiLabels(PathBuf),
    /// A single JSON file, or a directory of `<frame_id>.json` files.
    JsonFile(PathBuf),
    Service {
        endpoint: String,
        timeout: Duration,
        payload: ServicePayload,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub min_objectness: f64,
    pub source: DetectorSource,
}

impl DetectorConfig {
    pub fn new(source: DetectorSource) -> Self {
        Self {
            min_objectness: DEFAULT_MIN_OBJECTNESS,
            source,
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(0.0..=1.0).contains(&self.min_objectness) {
            return Err(DetectionError::Config(format!(
                "min objectness must lie in [0, 1], got {}",
                self.min_objectness
            )));
        }
        if let DetectorSource::Service { endpoint, .. } = &self.source {
            if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                return Err(DetectionError::Config(format!(
                    "detector endpoint `{endpoint}` is not an http(s) URL"
                )));
            }
        }
        Ok(())
    }
}

/// Detection provider bound to one configured source.
#[derive(Debug)]
pub struct Detector {
    config: DetectorConfig,
    labels: Option<DetectionMap>,
    agent: Option<ureq::Agent>,
}

fn read_text(path: &Path) -> Result<String, DetectionError> {
    std::fs::read_to_string(path).map_err(|source| DetectionError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        let labels = match &config.source {
            DetectorSource::KittiLabels(path) => Some(parse_kitti_tracking_labels(
                &read_text(path)?,
                &KittiParseOptions::default(),
            )?),
            _ => None,
        };
        let agent = match &config.source {
            DetectorSource::Service { timeout, .. } => Some(
                ureq::Agent::config_builder()
                    .timeout_global(Some(*timeout))
                    .http_status_as_error(false)
                    .build()
                    .into(),
            ),
            _ => None,
        };
        Ok(Self {
            config,
            labels,
            agent,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Detections for one frame, objectness-filtered.
    pub fn fetch(&self, frame: &FrameRef) -> Result<Vec<Detection>, DetectionError> {
        let raw = match &self.config.source {
            DetectorSource::KittiLabels(_) => {
                let number = frame
                    .frame_id
                    .parse::<u32>()
                    .unwrap_or(frame.index as u32);
                self.labels
                    .as_ref()
                    .and_then(|m| m.get(&number))
                    .cloned()
                    .unwrap_or_default()
            }
            DetectorSource::JsonFile(path) => {
                if path.is_dir() {
                    let file = path.join(format!("{}.json", frame.frame_id));
                    if file.exists() {
                        parse_detection_json(&read_text(&file)?)?
                    } else {
                        Vec::new()
                    }
                } else {
                    parse_detection_json(&read_text(path)?)?
                }
            }
            DetectorSource::Service {
                endpoint, payload, ..
            } => self.fetch_remote(endpoint, *payload, frame)?,
        };
        Ok(filter_by_objectness(&raw, self.config.min_objectness))
    }

    fn fetch_remote(
        &self,
        endpoint: &str,
        payload: ServicePayload,
        frame: &FrameRef,
    ) -> Result<Vec<Detection>, DetectionError> {
        let agent = self.agent.as_ref().expect("service source has an agent");
        let url = format!("{}/detect", endpoint.trim_end_matches('/'));
        let bytes = match payload {
            ServicePayload::PngBytes => Some(std::fs::read(&frame.path).map_err(|source| {
                DetectionError::Io {
                    path: frame.path.clone(),
                    source,
                }
            })?),
            ServicePayload::ImagePath => None,
        };
        let mut last_error = String::new();
        for attempt in 0..SERVICE_ATTEMPTS {
            if attempt > 0 {
                thread::sleep(SERVICE_BACKOFF * 2u32.pow(attempt - 1));
            }
            let request = agent.post(&url);
            let sent = match &bytes {
                Some(b) => request.content_type("image/png").send(&b[..]),
                None => request.send_json(serde_json::json!({
                    "image_path": frame.path.to_string_lossy()
                })),
            };
            let mut response = match sent {
                Ok(r) => r,
                Err(err) => {
                    last_error = err.to_string();
                    log::debug!("detector attempt {} failed: {last_error}", attempt + 1);
                    continue;
                }
            };
            let status = response.status().as_u16();
            if status >= 500 {
                last_error = format!("HTTP {status}");
                log::debug!("detector attempt {} failed: {last_error}", attempt + 1);
                continue;
            }
            if status >= 400 {
                return Err(DetectionError::Protocol(format!("detector rejected request: HTTP {status}")));
            }
            let body = response
                .body_mut()
                .read_to_string()
                .map_err(|e| DetectionError::Protocol(format!("unreadable response body: {e}")))?;
            return parse_detection_json(&body);
        }
        Err(DetectionError::Retryable {
            attempts: SERVICE_ATTEMPTS,
            message: last_error,
        })
    }
}
