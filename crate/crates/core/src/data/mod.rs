//! Image files, dataset manifests, configuration, augmentation and the
//! synthetic eye-scene generator.

mod augment;
mod config;
mod image_io;
mod manifest;
pub mod synth;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use augment::augment_rotate;
pub use config::{resolve_config_path, Config, CONFIG_ENV};
pub use image_io::{decode_pgm, encode_pgm, load_image, load_mask, save_image, save_mask};
pub use manifest::{EyeSide, Manifest, ManifestRow, Split};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a PGM file (magic {0:?})")]
    NotPgm(String),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("PGM has a zero dimension ({0}×{1})")]
    ZeroDimension(usize, usize),
    #[error("PGM maxval {0} unsupported (8-bit only)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("config key {key}: {message}")]
    ConfigValue { key: String, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
