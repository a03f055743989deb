//! File formats: trajectory text, binary rasters, dataset manifests and JSON
//! reports. Readers are pure functions of their input bytes.

mod manifest;
mod raster;
mod report;
mod trajectory;

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::metrics::MetricsError;

pub use manifest::{parse_manifest, read_manifest, DatasetManifest, ManifestEntry, MANIFEST_VERSION};
pub use raster::{
    decode_raster, depth_pair, encode_raster, read_raster, Dtype, Raster, RasterData, RasterKind, HEADER_LEN, MAGIC,
};
pub use report::{
    parse_report, write_report, BalanceSection, FilterSection, MetricsSection, ReportBundle, ReportMeta,
    TrajectoryEval, REPORT_DIGITS, TOOL_NAME,
};
pub use trajectory::{parse_trajectory, write_trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("frame {frame_index} has a different image size than the first frame")]
    MixedImageSize { frame_index: u64 },
    #[error("bad magic {0:?}, expected \"CTRW\"")]
    BadMagic([u8; 4]),
    #[error("expected a {expected} raster, found kind code {found}")]
    KindMismatch { expected: &'static str, found: u8 },
    #[error("{kind} raster has unsupported dtype code {code}")]
    DtypeMismatch { kind: &'static str, code: u8 },
    #[error("reserved header bytes must be zero")]
    ReservedNonZero,
    #[error("truncated raster: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("raster has trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("payload holds {actual} values, shape requires {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("non-finite {kind} value at element {index}")]
    NonFinite { kind: &'static str, index: usize },
    #[error("mask value {value} at element {index} is not 0 or 1")]
    BadMaskValue { index: usize, value: u8 },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("json: {0}")]
    Json(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        FormatError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
