use std::io::{BufRead, BufReader, Read};

use serde::Deserialize;

use super::{BBox, DatasetOrigin, DimsLookup, ParseError, Parsed, SourceRecord};

#[derive(Deserialize)]
struct OdgtLine {
    #[serde(rename = "ID")]
    id: String,
    #[serde(default)]
    gtboxes: Vec<GtBox>,
}

#[derive(Deserialize)]
struct GtBox {
    tag: String,
    fbox: Option<[f64; 4]>,
    #[serde(default)]
    extra: Option<GtExtra>,
}

#[derive(Deserialize)]
struct GtExtra {
    #[serde(default)]
    ignore: Option<i64>,
}

impl GtBox {
    fn ignored(&self) -> bool {
        self.extra
            .as_ref()
            .and_then(|e| e.ignore)
            .is_some_and(|v| v != 0)
    }
}

/// Parse CrowdHuman ODGT (one JSON object per line), keeping full-body boxes
/// tagged `person` that are not marked ignore.
pub fn parse_odgt<R: Read, D: DimsLookup + ?Sized>(
    reader: R,
    dims: &D,
) -> Result<Parsed, ParseError> {
    let mut out = Parsed::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OdgtLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                out.report.malformed_lines += 1;
                out.report.warn(format!("line {}: {e}", n + 1));
                continue;
            }
        };
        out.report.images_seen += 1;
        let kept: Vec<[f64; 4]> = parsed
            .gtboxes
            .iter()
            .filter(|b| b.tag == "person" && !b.ignored())
            .filter_map(|b| b.fbox)
            .collect();
        if kept.is_empty() {
            continue;
        }
        let Some((width, height)) = dims.dims(&parsed.id) else {
            out.report.missing_dims += 1;
            out.report.rows_skipped += 1;
            continue;
        };
        let mut person_boxes = Vec::with_capacity(kept.len());
        for [x, y, w, h] in kept {
            match BBox::new(x, y, w, h).clamp_to(width, height) {
                Some(b) => person_boxes.push(b),
                None => out.report.boxes_skipped += 1,
            }
        }
        if person_boxes.is_empty() {
            continue;
        }
        out.push(SourceRecord {
            image_id: DatasetOrigin::CrowdHuman.image_id(&parsed.id),
            image_path: format!("{}.jpg", parsed.id).into(),
            dataset_origin: DatasetOrigin::CrowdHuman,
            width,
            height,
            person_boxes,
            confidences: None,
        });
    }
    Ok(out)
}
