//! Online batch metrics, drift checks against a baseline, and a plain-text
//! exposition format.

use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::MonitorError;

pub const METRIC_SECONDS_PER_FRAME: &str = "vdp_batch_seconds_per_frame";
pub const METRIC_MEAN_OBJECTNESS: &str = "vdp_batch_mean_objectness";
pub const METRIC_FRAME_COUNT: &str = "vdp_batch_frame_count";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub batch_id: String,
    pub frame_count: usize,
    pub elapsed_seconds: f64,
    pub mean_objectness: f64,
    pub seconds_per_frame: f64,
}

impl BatchMetrics {
    pub fn new(
        batch_id: impl Into<String>,
        frame_count: usize,
        elapsed_seconds: f64,
        mean_objectness: f64,
    ) -> Result<Self, MonitorError> {
        if frame_count == 0 {
            return Err(MonitorError::Argument("a batch needs at least one frame".into()));
        }
        if !(elapsed_seconds > 0.0) || !elapsed_seconds.is_finite() {
            return Err(MonitorError::Argument(format!(
                "elapsed seconds must be > 0, got {elapsed_seconds}"
            )));
        }
        if !(0.0..=1.0).contains(&mean_objectness) {
            return Err(MonitorError::Argument(format!(
                "mean objectness must lie in [0, 1], got {mean_objectness}"
            )));
        }
        Ok(Self {
            batch_id: batch_id.into(),
            frame_count,
            elapsed_seconds,
            mean_objectness,
            seconds_per_frame: elapsed_seconds / frame_count as f64,
        })
    }
}

/// Mean of all scores pooled across frames; 0 when there are none.
pub fn mean_objectness<'a>(frames: impl IntoIterator<Item = &'a [Detection]>) -> f64 {
    let (sum, n) = frames
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), d| (s + d.score, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn batch_metrics(
    batch_id: impl Into<String>,
    dets_per_frame: &[Vec<Detection>],
    elapsed_seconds: f64,
) -> Result<BatchMetrics, MonitorError> {
    let mean = mean_objectness(dets_per_frame.iter().map(Vec::as_slice));
    BatchMetrics::new(batch_id, dets_per_frame.len(), elapsed_seconds, mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPolicy {
    pub baseline_mean_objectness: f64,
    pub baseline_seconds_per_frame: f64,
    /// Tolerated relative drop in mean objectness.
    pub max_objectness_drop: f64,
    /// Tolerated latency multiple of the baseline.
    pub max_latency_ratio: f64,
}

impl DriftPolicy {
    pub fn new(baseline_mean_objectness: f64, baseline_seconds_per_frame: f64) -> Self {
        Self {
            baseline_mean_objectness,
            baseline_seconds_per_frame,
            max_objectness_drop: 0.25,
            max_latency_ratio: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(0.0..=1.0).contains(&self.baseline_mean_objectness) {
            return Err(MonitorError::Argument("baseline objectness must lie in [0, 1]".into()));
        }
        if !(self.baseline_seconds_per_frame > 0.0) {
            return Err(MonitorError::Argument("baseline seconds per frame must be > 0".into()));
        }
        if !(self.max_objectness_drop > 0.0 && self.max_objectness_drop <= 1.0) {
            return Err(MonitorError::Argument("objectness drop must lie in (0, 1]".into()));
        }
        if !(self.max_latency_ratio > 1.0) {
            return Err(MonitorError::Argument("latency ratio must be > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftReason {
    Objectness { observed: f64, floor: f64 },
    Latency { observed: f64, ceiling: f64 },
}

impl fmt::Display for DriftReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftReason::Objectness { observed, floor } => {
                write!(f, "mean objectness {observed} below {floor}")
            }
            DriftReason::Latency { observed, ceiling } => {
                write!(f, "{observed} s/frame above {ceiling}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Ok,
    Drift(Vec<DriftReason>),
}

impl Verdict {
    pub fn is_drift(&self) -> bool {
        matches!(self, Verdict::Drift(_))
    }
}

pub fn drift_check(m: &BatchMetrics, policy: &DriftPolicy) -> Verdict {
    let mut reasons = Vec::new();
    let floor = policy.baseline_mean_objectness * (1.0 - policy.max_objectness_drop);
    if m.mean_objectness < floor {
        reasons.push(DriftReason::Objectness {
            observed: m.mean_objectness,
            floor,
        });
    }
    let ceiling = policy.baseline_seconds_per_frame * policy.max_latency_ratio;
    if m.seconds_per_frame > ceiling {
        reasons.push(DriftReason::Latency {
            observed: m.seconds_per_frame,
            ceiling,
        });
    }
    if reasons.is_empty() {
        Verdict::Ok
    } else {
        Verdict::Drift(reasons)
    }
}

fn escape_label(v: &str) -> String {
    v.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn unescape_label(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// One line per metric per batch: `<name>{batch="<id>"} <value>`.
pub fn expose_metrics(history: &[BatchMetrics]) -> String {
    let mut out = String::new();
    for m in history {
        let id = escape_label(&m.batch_id);
        out.push_str(&format!("{METRIC_SECONDS_PER_FRAME}{{batch=\"{id}\"}} {}\n", m.seconds_per_frame));
        out.push_str(&format!("{METRIC_MEAN_OBJECTNESS}{{batch=\"{id}\"}} {}\n", m.mean_objectness));
        out.push_str(&format!("{METRIC_FRAME_COUNT}{{batch=\"{id}\"}} {}\n", m.frame_count));
    }
    out
}

/// Rebuilds batch metrics from exposition text, in order of first appearance.
pub fn parse_exposition(text: &str) -> Result<Vec<BatchMetrics>, MonitorError> {
    #[derive(Default)]
    struct Partial {
        spf: Option<f64>,
        objectness: Option<f64>,
        frames: Option<usize>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partial: std::collections::HashMap<String, Partial> = Default::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |message: &str| MonitorError::Exposition {
            line: line_no,
            message: message.to_string(),
        };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, rest) = line.split_once("{batch=\"").ok_or_else(|| bad("missing batch label"))?;
        let (raw_id, value) = rest.rsplit_once("\"} ").ok_or_else(|| bad("unterminated label"))?;
        let id = unescape_label(raw_id);
        if !partial.contains_key(&id) {
            order.push(id.clone());
        }
        let entry = partial.entry(id).or_default();
        let number: f64 = value.trim().parse().map_err(|_| bad("value is not a number"))?;
        match name {
            METRIC_SECONDS_PER_FRAME => entry.spf = Some(number),
            METRIC_MEAN_OBJECTNESS => entry.objectness = Some(number),
            METRIC_FRAME_COUNT => entry.frames = Some(number as usize),
            other => return Err(bad(&format!("unknown metric `{other}`"))),
        }
    }
    order
        .into_iter()
        .map(|id| {
            let p = &partial[&id];
            match (p.spf, p.objectness, p.frames) {
                (Some(spf), Some(objectness), Some(frames)) => Ok(BatchMetrics {
                    elapsed_seconds: spf * frames as f64,
                    batch_id: id,
                    frame_count: frames,
                    mean_objectness: objectness,
                    seconds_per_frame: spf,
                }),
                _ => Err(MonitorError::Exposition {
                    line: 0,
                    message: format!("batch `{id}` is missing metrics"),
                }),
            }
        })
        .collect()
}

/// Append-only metric history with a single serialized writer.
#[derive(Debug, Default)]
pub struct MetricsRegistry {
    history: Mutex<Vec<BatchMetrics>>,
}

impl MetricsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, metrics: BatchMetrics) {
        self.history.lock().expect("metrics lock").push(metrics);
    }

    pub fn snapshot(&self) -> Vec<BatchMetrics> {
        self.history.lock().expect("metrics lock").clone()
    }

    pub fn expose(&self) -> String {
        expose_metrics(&self.snapshot())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::BBox;

    fn det(score: f64) -> Detection {
        Detection::new("Car", score, BBox::new(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn pooled_mean_objectness() {
        let m = batch_metrics("b", &[vec![det(0.8)], vec![det(0.4), det(0.8)]], 1.0).unwrap();
        assert!((m.mean_objectness - 2.0 / 3.0).abs() < 1e-12);
        let empty = batch_metrics("b", &[vec![], vec![]], 1.0).unwrap();
        assert_eq!(empty.mean_objectness, 0.0);
        let ten = batch_metrics("b", &vec![vec![]; 10], 1.6).unwrap();
        assert!((ten.seconds_per_frame - 0.16).abs() < 1e-12);
        assert!((0.15..=0.17).contains(&ten.seconds_per_frame));
        assert!(batch_metrics("b", &[], 1.0).is_err());
        assert!(batch_metrics("b", &[vec![]], 0.0).is_err());
    }

    #[test]
    fn drift_reasons_enumerate_all_violations() {
        let policy = DriftPolicy::new(0.6, 0.16);
        let m = BatchMetrics::new("b", 10, 7.0, 0.3).unwrap();
        match drift_check(&m, &policy) {
            Verdict::Drift(r) => assert_eq!(r.len(), 2),
            Verdict::Ok => panic!("expected drift"),
        }
        let bad = DriftPolicy {
            max_latency_ratio: 1.0,
            ..policy
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exposition_shape_and_escaping() {
        assert_eq!(expose_metrics(&[]), "");
        let m = BatchMetrics::new("seq \"0020\"", 4, 1.0, 0.5).unwrap();
        let text = expose_metrics(std::slice::from_ref(&m));
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("vdp_batch_seconds_per_frame{batch=\"seq \\\"0020\\\"\"} 0.25\n"));
        assert_eq!(parse_exposition(&text).unwrap(), vec![m]);
        assert!(parse_exposition("bogus 1").is_err());
    }

    #[test]
    fn registry_snapshot() {
        let reg = MetricsRegistry::new();
        reg.record(BatchMetrics::new("a", 1, 1.0, 0.1).unwrap());
        reg.record(BatchMetrics::new("b", 2, 1.0, 0.2).unwrap());
        assert_eq!(reg.snapshot().len(), 2);
        assert_eq!(reg.expose().lines().count(), 6);
    }
}
