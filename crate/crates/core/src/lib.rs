//! Key-frame selection and tagging for video frame sequences.
//!
//! Frames are scored by Variance-of-Laplacian, low-quality frames are
//! dropped, structurally redundant frames are dropped by SSIM, survivors are
//! tagged with rule-based scene categories from object detections, and the
//! whole record is persisted as a queryable YAML manifest.
//!
//! Scoring and pairwise SSIM run on a rayon pool when the `parallel` feature
//! (on by default) is enabled, and sequentially otherwise. Results are
//! identical either way.

pub mod detection;
pub mod error;
pub mod filter;
pub mod imageproc;
pub mod manifest;
pub mod monitor;
pub mod par;
pub mod scene;

pub use detection::{Detection, Detector, DetectorConfig, DetectorSource};
pub use error::{DetectionError, FilterError, ImageError, ManifestError, MonitorError, SceneError};
pub use filter::{FilterConfig, FilterOutcome, FrameRef, FrameRole, RemovalStage, SsimMode};
pub use imageproc::{GrayImage, SsimParams};
pub use manifest::{Query, SequenceManifest};
pub use scene::{SceneCategory, SceneRules};
