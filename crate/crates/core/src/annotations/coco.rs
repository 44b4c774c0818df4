use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::Deserialize;

use super::{byte_offset, BBox, DatasetOrigin, LabelAliasMap, ParseError, Parsed, SourceRecord};

#[derive(Deserialize)]
struct CocoDocument {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Parse a COCO-style detection document (COCO, Object365).
///
/// Emits one record per image that keeps at least one person box, in the
/// document's image order.
pub fn parse_coco<R: Read>(
    mut reader: R,
    aliases: &LabelAliasMap,
    origin: DatasetOrigin,
) -> Result<Parsed, ParseError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let doc: CocoDocument = serde_json::from_slice(&bytes).map_err(|e| ParseError::Malformed {
        offset: byte_offset(&bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let person_categories: HashSet<u64> = doc
        .categories
        .iter()
        .filter(|c| aliases.contains(&c.name))
        .map(|c| c.id)
        .collect();

    let index: HashMap<u64, usize> = doc
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.id, i))
        .collect();

    let mut out = Parsed::default();
    out.report.images_seen = doc.images.len();
    let mut boxes: Vec<Vec<BBox>> = vec![Vec::new(); doc.images.len()];
    for ann in &doc.annotations {
        if !person_categories.contains(&ann.category_id) {
            continue;
        }
        let Some(&slot) = index.get(&ann.image_id) else {
            out.report.rows_skipped += 1;
            out.report.warn(format!(
                "annotation references unknown image id {}",
                ann.image_id
            ));
            continue;
        };
        let img = &doc.images[slot];
        let [x, y, w, h] = ann.bbox;
        match BBox::new(x, y, w, h).clamp_to(img.width, img.height) {
            Some(b) => boxes[slot].push(b),
            None => {
                out.report.boxes_skipped += 1;
                out.report.warn(format!(
                    "image {}: degenerate box {:?} after clamping",
                    img.id, ann.bbox
                ));
            }
        }
    }

    for (img, person_boxes) in doc.images.iter().zip(boxes) {
        if person_boxes.is_empty() {
            continue;
        }
        out.push(SourceRecord {
            image_id: origin.image_id(&img.id.to_string()),
            image_path: img.file_name.clone().into(),
            dataset_origin: origin,
            width: img.width,
            height: img.height,
            person_boxes,
            confidences: None,
        });
    }
    Ok(out)
}
