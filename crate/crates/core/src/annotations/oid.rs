use std::collections::{HashMap, HashSet};
use std::io::Read;

use super::{BBox, DatasetOrigin, DimsLookup, LabelAliasMap, ParseError, Parsed, SourceRecord};

/// Open Images specific switches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OidOptions {
    /// Drop rows whose `Confidence` column is below this value. Off by default.
    pub min_confidence: Option<f64>,
}

struct Columns {
    image_id: usize,
    label: usize,
    confidence: Option<usize>,
    x_min: usize,
    x_max: usize,
    y_min: usize,
    y_max: usize,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self, ParseError> {
        let find = |name: &str| -> Result<usize, ParseError> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ParseError::Malformed {
                    offset: 0,
                    message: format!("missing column {name}"),
                })
        };
        Ok(Self {
            image_id: find("ImageID")?,
            label: find("LabelName")?,
            confidence: find("Confidence").ok(),
            x_min: find("XMin")?,
            x_max: find("XMax")?,
            y_min: find("YMin")?,
            y_max: find("YMax")?,
        })
    }
}

/// Parse an Open Images box CSV with normalized coordinates.
///
/// Image dimensions come from `dims`, keyed by the native `ImageID`.
pub fn parse_oid_csv<R: Read, D: DimsLookup + ?Sized>(
    reader: R,
    dims: &D,
    aliases: &LabelAliasMap,
    options: OidOptions,
) -> Result<Parsed, ParseError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let columns = Columns::locate(&csv.headers().map_err(malformed)?.clone())?;

    let mut out = Parsed::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, ((u32, u32), Vec<BBox>)> = HashMap::new();

    for row in csv.records() {
        let row = row.map_err(malformed)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let image_id = field(columns.image_id).to_string();
        if seen.insert(image_id.clone()) {
            out.report.images_seen += 1;
        }
        if !aliases.contains(field(columns.label)) {
            continue;
        }
        if let (Some(min), Some(col)) = (options.min_confidence, columns.confidence) {
            match field(col).parse::<f64>() {
                Ok(c) if c >= min => {}
                _ => {
                    out.report.rows_skipped += 1;
                    continue;
                }
            }
        }
        let coords: Result<Vec<f64>, _> =
            [columns.x_min, columns.x_max, columns.y_min, columns.y_max]
                .iter()
                .map(|&i| field(i).parse::<f64>())
                .collect();
        let Ok(mut coords) = coords else {
            out.report.rows_skipped += 1;
            out.report
                .warn(format!("line {line}: unparseable coordinates"));
            continue;
        };
        for v in coords.iter_mut() {
            if !(0.0..=1.0).contains(v) {
                out.report.warn(format!(
                    "line {line}: normalized coordinate {v} clamped to [0, 1]"
                ));
                *v = v.clamp(0.0, 1.0);
            }
        }
        let [x_min, x_max, y_min, y_max] = [coords[0], coords[1], coords[2], coords[3]];
        if x_max <= x_min || y_max <= y_min {
            out.report.rows_skipped += 1;
            out.report
                .warn(format!("line {line}: empty box for image {image_id}"));
            continue;
        }
        let Some((width, height)) = dims.dims(&image_id) else {
            out.report.rows_skipped += 1;
            out.report.missing_dims += 1;
            continue;
        };
        let (w, h) = (f64::from(width), f64::from(height));
        let bbox = BBox::new(
            x_min * w,
            y_min * h,
            (x_max - x_min) * w,
            (y_max - y_min) * h,
        );
        let Some(bbox) = bbox.clamp_to(width, height) else {
            out.report.boxes_skipped += 1;
            continue;
        };
        let entry = grouped.entry(image_id.clone()).or_insert_with(|| {
            order.push(image_id.clone());
            ((width, height), Vec::new())
        });
        entry.1.push(bbox);
    }

    for image_id in order {
        let ((width, height), person_boxes) = grouped.remove(&image_id).expect("grouped id");
        out.push(SourceRecord {
            image_id: DatasetOrigin::Oid.image_id(&image_id),
            image_path: format!("{image_id}.jpg").into(),
            dataset_origin: DatasetOrigin::Oid,
            width,
            height,
            person_boxes,
            confidences: None,
        });
    }
    Ok(out)
}

fn malformed(e: csv::Error) -> ParseError {
    let offset = e
        .position()
        .map_or(0, |p| usize::try_from(p.byte()).unwrap_or(usize::MAX));
    ParseError::Malformed {
        offset,
        message: e.to_string(),
    }
}
