use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("pixel {index} has value {value} outside [0, 255]")]
    PixelRange { index: usize, value: f64 },
    #[error("argument error: {0}")]
    Argument(String),
    #[error("invalid ssim parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("frames {reference} and {candidate} cannot be compared: {source}")]
    Mismatch {
        reference: String,
        candidate: String,
        #[source]
        source: ImageError,
    },
    #[error("all {0} frames failed to load")]
    AllFramesFailed(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid detection: {0}")]
    Invalid(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("detector unavailable after {attempts} attempts: {message}")]
    Retryable { attempts: u32, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("invalid rules: {0}")]
    Rules(String),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("validation error at `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("invalid query: {0}")]
    Query(String),
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("exposition line {line}: {message}")]
    Exposition { line: usize, message: String },
}
