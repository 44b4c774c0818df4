//! Annotation parsers producing a unified stream of person-labelled records.
//!
//! Every parser clamps boxes to the image, drops boxes that become degenerate,
//! and reports what it skipped in a [`ParseReport`] instead of failing the
//! whole shard. Only a structurally broken document is a hard error.

mod alias;
mod coco;
mod detect;
mod dims;
mod odgt;
mod oid;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alias::LabelAliasMap;
pub use coco::parse_coco;
pub use detect::{parse_detection_import, DEFAULT_MIN_CONFIDENCE};
pub use dims::{DimsLookup, HeaderDims};
pub use odgt::parse_odgt;
pub use oid::{parse_oid_csv, OidOptions};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed annotation document at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("reading annotations: {0}")]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in source-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Intersect with the image rectangle. `None` when nothing with positive
    /// area remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let (iw, ih) = (f64::from(width), f64::from(height));
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(iw);
        let y1 = self.bottom().min(ih);
        let (w, h) = (x1 - x0, y1 - y0);
        if !(w > 0.0 && h > 0.0) {
            return None;
        }
        Some(BBox::new(x0, y0, w, h))
    }

    pub fn is_inside(&self, width: u32, height: u32) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x >= 0.0
            && self.y >= 0.0
            && self.right() <= f64::from(width)
            && self.bottom() <= f64::from(height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetOrigin {
    #[serde(rename = "coco")]
    Coco,
    #[serde(rename = "oid")]
    Oid,
    #[serde(rename = "object365")]
    Object365,
    #[serde(rename = "crowdhuman")]
    CrowdHuman,
    #[serde(rename = "detection_import")]
    DetectionImport,
}

impl DatasetOrigin {
    /// Prefix that keeps image ids unique across datasets.
    pub fn id_prefix(self) -> &'static str {
        match self {
            DatasetOrigin::Coco => "coco",
            DatasetOrigin::Oid => "oid",
            DatasetOrigin::Object365 => "o365",
            DatasetOrigin::CrowdHuman => "crowdhuman",
            DatasetOrigin::DetectionImport => "det",
        }
    }

    pub fn image_id(self, native: &str) -> String {
        format!("{}_{}", self.id_prefix(), native)
    }
}

impl fmt::Display for DatasetOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DatasetOrigin::Coco => "coco",
            DatasetOrigin::Oid => "oid",
            DatasetOrigin::Object365 => "object365",
            DatasetOrigin::CrowdHuman => "crowdhuman",
            DatasetOrigin::DetectionImport => "detection_import",
        };
        f.write_str(name)
    }
}

/// One source image with its person boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub image_id: String,
    /// Relative to the dataset's image root until ingestion resolves it.
    pub image_path: PathBuf,
    pub dataset_origin: DatasetOrigin,
    pub width: u32,
    pub height: u32,
    pub person_boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<f64>>,
}

impl SourceRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(bad) = self
            .person_boxes
            .iter()
            .find(|b| !b.is_inside(self.width, self.height))
        {
            return Err(format!("{}: box {bad:?} outside image", self.image_id));
        }
        if let Some(conf) = &self.confidences {
            if conf.len() != self.person_boxes.len() {
                return Err(format!(
                    "{}: {} confidences for {} boxes",
                    self.image_id,
                    conf.len(),
                    self.person_boxes.len()
                ));
            }
        }
        Ok(())
    }
}

/// Per-shard parser bookkeeping. Merged by the orchestrator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    /// Distinct images mentioned by the source, person-labelled or not.
    pub images_seen: usize,
    pub records_emitted: usize,
    pub boxes_emitted: usize,
    pub boxes_skipped: usize,
    pub rows_skipped: usize,
    pub missing_dims: usize,
    pub malformed_lines: usize,
    pub warnings: Vec<String>,
}

impl ParseReport {
    pub(crate) fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn merge(&mut self, other: ParseReport) {
        self.images_seen += other.images_seen;
        self.records_emitted += other.records_emitted;
        self.boxes_emitted += other.boxes_emitted;
        self.boxes_skipped += other.boxes_skipped;
        self.rows_skipped += other.rows_skipped;
        self.missing_dims += other.missing_dims;
        self.malformed_lines += other.malformed_lines;
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Parsed {
    pub records: Vec<SourceRecord>,
    pub report: ParseReport,
}

impl Parsed {
    pub(crate) fn push(&mut self, record: SourceRecord) {
        self.report.records_emitted += 1;
        self.report.boxes_emitted += record.person_boxes.len();
        self.records.push(record);
    }
}

/// Byte offset of a 1-based (line, column) position, as reported by serde_json.
pub(crate) fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, chunk) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(chunk.len());
        }
        offset += chunk.len() + 1;
    }
    bytes.len()
}
