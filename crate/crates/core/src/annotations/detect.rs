use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{BBox, DatasetOrigin, ParseError, Parsed, SourceRecord};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Deserialize)]
struct DetectionLine {
    image: String,
    width: u32,
    height: u32,
    #[serde(default)]
    boxes: Vec<Detection>,
}

#[derive(Deserialize)]
struct Detection {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    conf: f64,
    #[allow(dead_code)]
    #[serde(default)]
    cls: Option<i64>,
}

/// Import precomputed person detections (JSON lines, corner boxes).
///
/// Every box is assumed to be of the detector's person class.
pub fn parse_detection_import<R: Read>(
    reader: R,
    min_confidence: f64,
) -> Result<Parsed, ParseError> {
    let mut out = Parsed::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                out.report.malformed_lines += 1;
                out.report.warn(format!("line {}: {e}", n + 1));
                continue;
            }
        };
        out.report.images_seen += 1;
        let mut person_boxes = Vec::new();
        let mut confidences = Vec::new();
        for det in &parsed.boxes {
            if det.conf < min_confidence {
                continue;
            }
            if det.x2 <= det.x1 || det.y2 <= det.y1 {
                out.report.boxes_skipped += 1;
                continue;
            }
            let Some(b) = BBox::from_corners(det.x1, det.y1, det.x2, det.y2)
                .clamp_to(parsed.width, parsed.height)
            else {
                out.report.boxes_skipped += 1;
                continue;
            };
            person_boxes.push(b);
            confidences.push(det.conf);
        }
        if person_boxes.is_empty() {
            continue;
        }
        let stem = Path::new(&parsed.image).file_stem().map_or_else(
            || parsed.image.clone(),
            |s| s.to_string_lossy().into_owned(),
        );
        out.push(SourceRecord {
            image_id: DatasetOrigin::DetectionImport.image_id(&stem),
            image_path: parsed.image.clone().into(),
            dataset_origin: DatasetOrigin::DetectionImport,
            width: parsed.width,
            height: parsed.height,
            person_boxes,
            confidences: Some(confidences),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(x1: f64, y1: f64, x2: f64, y2: f64, conf: f64) -> String {
        format!(
            r#"{{"image":"dir/img.png","width":200,"height":200,"boxes":[{{"x1":{x1},"y1":{y1},"x2":{x2},"y2":{y2},"conf":{conf},"cls":0}}]}}"#
        )
    }

    #[test]
    fn confident_box_is_kept() {
        let out =
            parse_detection_import(line(0.0, 0.0, 100.0, 100.0, 0.9).as_bytes(), 0.5).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.image_id, "det_img");
        assert_eq!(r.person_boxes, vec![BBox::new(0.0, 0.0, 100.0, 100.0)]);
        assert_eq!(r.confidences, Some(vec![0.9]));
    }

    #[test]
    fn low_confidence_record_is_omitted() {
        let out =
            parse_detection_import(line(0.0, 0.0, 100.0, 100.0, 0.3).as_bytes(), 0.5).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.report.images_seen, 1);
    }

    #[test]
    fn degenerate_box_is_skipped() {
        let out =
            parse_detection_import(line(10.0, 10.0, 10.0, 50.0, 0.9).as_bytes(), 0.5).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.report.boxes_skipped, 1);
    }

    #[test]
    fn malformed_line_is_counted() {
        let text = format!("not json\n{}\n", line(0.0, 0.0, 10.0, 10.0, 0.9));
        let out = parse_detection_import(text.as_bytes(), 0.5).unwrap();
        assert_eq!(out.report.malformed_lines, 1);
        assert_eq!(out.records.len(), 1);
    }
}
