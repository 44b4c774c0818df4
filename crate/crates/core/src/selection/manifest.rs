use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ScoreRow, SelectionError};
use crate::annotations::DatasetOrigin;
use crate::boxgeom::SquareCrop;

pub const MANIFEST_VERSION: u32 = 1;

/// Outcome of one candidate crop. Non-selected statuses name the first stage
/// that rejected it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Status {
    Selected,
    BelowTopFraction,
    FailedThreshold(String),
    FailedBlurGate,
    FailedSizeGate,
    SuppressedNms,
    /// The crop could not be scored (e.g. a flat region with no texture).
    FailedScoring,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Selected => f.write_str("selected"),
            Status::BelowTopFraction => f.write_str("below_top_fraction"),
            Status::FailedThreshold(m) => write!(f, "failed_threshold:{m}"),
            Status::FailedBlurGate => f.write_str("failed_blur_gate"),
            Status::FailedSizeGate => f.write_str("failed_size_gate"),
            Status::SuppressedNms => f.write_str("suppressed_nms"),
            Status::FailedScoring => f.write_str("failed_scoring"),
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "selected" => Status::Selected,
            "below_top_fraction" => Status::BelowTopFraction,
            "failed_blur_gate" => Status::FailedBlurGate,
            "failed_size_gate" => Status::FailedSizeGate,
            "suppressed_nms" => Status::SuppressedNms,
            "failed_scoring" => Status::FailedScoring,
            other => match other.strip_prefix("failed_threshold:") {
                Some(m) if !m.is_empty() => Status::FailedThreshold(m.to_string()),
                _ => return Err(format!("unknown status '{other}'")),
            },
        })
    }
}

impl From<Status> for String {
    fn from(s: Status) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Status {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

fn version() -> u32 {
    MANIFEST_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default = "version")]
    pub v: u32,
    pub crop_id: String,
    pub source_image_id: String,
    pub dataset: DatasetOrigin,
    pub crop: SquareCrop,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplacian_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub z: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub status: Status,
}

impl ManifestEntry {
    pub fn from_row(row: &ScoreRow, status: Status) -> Self {
        Self {
            v: MANIFEST_VERSION,
            crop_id: row.crop_id.clone(),
            source_image_id: row.source_image_id.clone(),
            dataset: row.dataset,
            crop: row.crop,
            laplacian_variance: Some(row.laplacian_variance),
            scores: row.scores.clone(),
            z: row.z.clone(),
            aggregate: row.aggregate,
            rank: None,
            status,
        }
    }

    /// Entry for a crop rejected before scoring.
    pub fn rejected(
        crop_id: String,
        source_image_id: String,
        dataset: DatasetOrigin,
        crop: SquareCrop,
        laplacian_variance: Option<f64>,
        status: Status,
    ) -> Self {
        Self {
            v: MANIFEST_VERSION,
            crop_id,
            source_image_id,
            dataset,
            crop,
            laplacian_variance,
            scores: BTreeMap::new(),
            z: BTreeMap::new(),
            aggregate: None,
            rank: None,
            status,
        }
    }
}

/// Every candidate crop with its outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionManifest {
    pub entries: Vec<ManifestEntry>,
}

impl SelectionManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    pub fn selected(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.status == Status::Selected)
    }

    pub fn extend(&mut self, other: SelectionManifest) {
        self.entries.extend(other.entries);
    }

    /// Order by crop id so output does not depend on processing order.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SelectionError> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)
                .map_err(|source| SelectionError::Manifest { line: 0, source })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self, SelectionError> {
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|source| {
                SelectionError::Manifest {
                    line: i + 1,
                    source,
                }
            })?);
        }
        Ok(Self { entries })
    }
}

/// File name of a crop image: the crop id with characters outside
/// `[A-Za-z0-9._,#-]` replaced by `_`.
pub fn crop_file_name(crop_id: &str, extension: &str) -> String {
    let stem: String = crop_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._,#-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{stem}.{extension}")
}

/// Number of entries per status.
pub fn status_counts(manifest: &SelectionManifest) -> BTreeMap<Status, usize> {
    let mut out = BTreeMap::new();
    for e in &manifest.entries {
        *out.entry(e.status.clone()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::table::tests::row;

    #[test]
    fn status_strings_round_trip() {
        for s in [
            Status::Selected,
            Status::BelowTopFraction,
            Status::FailedThreshold("maniqa".into()),
            Status::FailedBlurGate,
            Status::FailedSizeGate,
            Status::SuppressedNms,
            Status::FailedScoring,
        ] {
            assert_eq!(s.to_string().parse::<Status>().unwrap(), s);
        }
        assert!("failed_threshold:".parse::<Status>().is_err());
        assert!("nope".parse::<Status>().is_err());
    }

    #[test]
    fn file_names_are_flat() {
        assert_eq!(
            crop_file_name("crowdhuman_284193,fa12#0", "png"),
            "crowdhuman_284193,fa12#0.png"
        );
        assert_eq!(crop_file_name("a/b c", "png"), "a_b_c.png");
    }

    #[test]
    fn manifest_round_trip() {
        let mut e = ManifestEntry::from_row(
            &row("a", &[("niqe", 3.25)]),
            Status::FailedThreshold("niqe".into()),
        );
        e.rank = Some(4);
        let m = SelectionManifest::new(vec![e]);
        let mut buf = Vec::new();
        m.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"v\":1,"));
        assert!(text.contains("\"status\":\"failed_threshold:niqe\""));
        assert_eq!(SelectionManifest::read_jsonl(buf.as_slice()).unwrap(), m);
    }
}
