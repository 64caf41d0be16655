//! ASCII PCD / PLY readers and writers.
//!
//! Only the ASCII encodings are supported; binary variants are rejected with
//! a clear error so the parser surface stays auditable. Coordinates are
//! written with six decimal digits, which keeps read-write round trips within
//! 1e-6 m at desk scale. Rows with non-finite coordinates are dropped at
//! parse time (and counted) instead of poisoning downstream geometry.
//!
//! The parsers never panic on arbitrary byte input: every input yields either
//! a cloud or a [`FormatError`].

mod pcd;
mod ply;

pub use pcd::{read_pcd, write_pcd};
pub use ply::{read_ply, write_ply};

use crate::cloud::{PointCloud, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unsupported encoding `{0}`: only ascii data is supported")]
    UnsupportedEncoding(String),
    #[error("input is not valid UTF-8 text")]
    NotText,
    #[error("label count {labels} does not match cloud size {points}")]
    LabelMismatch { labels: usize, points: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        FormatError::Malformed {
            line,
            msg: msg.into(),
        }
    }
}

/// Result of parsing a cloud file: the retained points plus the number of
/// rows that were dropped because a coordinate was NaN or infinite.
#[derive(Debug, Clone)]
pub struct ParsedCloud {
    pub cloud: PointCloud,
    pub dropped_nonfinite: usize,
}

/// Per-point category used for colored diagnostic output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Interior,
    Edge,
    /// Inlier of the n-th extracted segment; colors cycle through a palette.
    Segment(u16),
    Corner,
    Wireframe,
}

const SEGMENT_PALETTE: [Rgb; 8] = [
    [64, 120, 230],
    [230, 140, 40],
    [60, 190, 190],
    [190, 70, 200],
    [160, 200, 60],
    [230, 80, 120],
    [90, 90, 230],
    [200, 170, 90],
];

impl Label {
    pub fn color(&self) -> Rgb {
        match self {
            Label::Interior => [128, 128, 128],
            Label::Edge => [220, 50, 40],
            Label::Segment(i) => SEGMENT_PALETTE[*i as usize % SEGMENT_PALETTE.len()],
            Label::Corner => [255, 214, 0],
            Label::Wireframe => [40, 200, 90],
        }
    }
}

/// Serializes the cloud as an ASCII PLY with one color per label category.
pub fn write_annotated(cloud: &PointCloud, labels: &[Label]) -> Result<String, FormatError> {
    if labels.len() != cloud.len() {
        return Err(FormatError::LabelMismatch {
            labels: labels.len(),
            points: cloud.len(),
        });
    }
    let colored = PointCloud {
        points: cloud.points.clone(),
        colors: Some(labels.iter().map(Label::color).collect()),
    };
    Ok(write_ply(&colored))
}

fn input_to_lines(bytes: &[u8]) -> Result<Vec<&str>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::NotText)?;
    Ok(text.lines().collect())
}

fn parse_coord(token: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    token
        .parse::<f64>()
        .map_err(|_| FormatError::at(line, format!("cannot parse {what} value `{token}`")))
}
