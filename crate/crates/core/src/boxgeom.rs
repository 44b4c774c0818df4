//! Square crops around person boxes, the size gate, and center-priority NMS.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::BBox;

#[derive(Debug, Error)]
pub enum BoxError {
    #[error("iou threshold {0} outside [0, 1]")]
    IouThreshold(f64),
}

/// In-bounds square crop derived from a person box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareCrop {
    pub x: f64,
    pub y: f64,
    pub side: f64,
    pub source_box: BBox,
    /// Distance from the crop center to the image center.
    pub center_distance: f64,
}

impl SquareCrop {
    pub fn as_bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.side, self.side)
    }

    /// Snap to integer pixels: origin and side rounded, then kept inside the
    /// image.
    pub fn pixel_rect(&self, img_w: u32, img_h: u32) -> (u32, u32, u32) {
        let side = (self.side.round() as u32).clamp(1, img_w.min(img_h));
        let x = (self.x.round().max(0.0) as u32).min(img_w - side);
        let y = (self.y.round().max(0.0) as u32).min(img_h - side);
        (x, y, side)
    }

    fn order_key(&self, other: &Self) -> Ordering {
        self.center_distance
            .total_cmp(&other.center_distance)
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
    }
}

/// Square of side `max(w, h)` (at most the shorter image side) centered on the
/// box, then shifted the least distance needed to lie inside the image.
///
/// When the side is clamped, an axis on which the box is longer than the
/// square is aligned to the box's leading edge instead of its center, so a
/// tall person keeps the head.
pub fn squarify(b: &BBox, img_w: u32, img_h: u32) -> SquareCrop {
    let (iw, ih) = (f64::from(img_w), f64::from(img_h));
    let side = b.w.max(b.h).min(iw.min(ih));
    let place = |start: f64, extent: f64, limit: f64| {
        let origin = if extent > side {
            start
        } else {
            start + extent / 2.0 - side / 2.0
        };
        origin.clamp(0.0, limit - side)
    };
    let x = place(b.x, b.w, iw);
    let y = place(b.y, b.h, ih);
    let (sx, sy) = (x + side / 2.0, y + side / 2.0);
    SquareCrop {
        x,
        y,
        side,
        source_box: *b,
        center_distance: (sx - iw / 2.0).hypot(sy - ih / 2.0),
    }
}

pub fn size_gate(crop: &SquareCrop, min_side: f64) -> bool {
    crop.side >= min_side
}

/// Intersection over union; 0 for disjoint or empty rectangles.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy NMS visiting crops nearest the image center first (ties by `x`, then
/// `y`). A crop is dropped when its IoU with any kept crop exceeds the
/// threshold.
pub fn center_priority_nms(
    crops: &[SquareCrop],
    iou_threshold: f64,
) -> Result<Vec<SquareCrop>, BoxError> {
    Ok(nms_partition(crops, iou_threshold)?.0)
}

/// Kept crops in keep order, plus the suppressed ones in visit order.
pub fn nms_partition(
    crops: &[SquareCrop],
    iou_threshold: f64,
) -> Result<(Vec<SquareCrop>, Vec<SquareCrop>), BoxError> {
    let (kept, suppressed) = nms_indices(crops, iou_threshold)?;
    Ok((
        kept.into_iter().map(|i| crops[i]).collect(),
        suppressed.into_iter().map(|i| crops[i]).collect(),
    ))
}

/// [`nms_partition`] on indices into `crops`.
pub fn nms_indices(
    crops: &[SquareCrop],
    iou_threshold: f64,
) -> Result<(Vec<usize>, Vec<usize>), BoxError> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(BoxError::IouThreshold(iou_threshold));
    }
    let mut order: Vec<usize> = (0..crops.len()).collect();
    order.sort_by(|&a, &b| crops[a].order_key(&crops[b]));
    let mut kept: Vec<usize> = Vec::new();
    let mut suppressed = Vec::new();
    for i in order {
        let rect = crops[i].as_bbox();
        if kept
            .iter()
            .any(|&k| iou(&crops[k].as_bbox(), &rect) > iou_threshold)
        {
            suppressed.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok((kept, suppressed))
}
