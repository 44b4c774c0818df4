use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlurScope, InputFormat, PipelineConfig, PipelineError, UnreadablePolicy};
use crate::annotations::{
    parse_coco, parse_detection_import, parse_odgt, parse_oid_csv, BBox, HeaderDims, OidOptions,
    ParseReport, SourceRecord,
};
use crate::boxgeom::{nms_indices, size_gate, squarify, SquareCrop};
use crate::imaging::{
    crop, laplacian_variance, resize, to_luma, ImageBuffer, ImagingError, ResizeFilter,
};
use crate::iqa::{brisque, niqe_score, IqaError, NiqeModel, SvrModel};
use crate::selection::{
    crop_file_name, normalize, select_top, ManifestEntry, ScoreRow, ScoreTable, SelectionManifest,
    Status,
};

/// Parsed source records from every configured input.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<SourceRecord>,
    pub report: ParseReport,
}

/// Parse every input, resolving image paths against the input's image root.
/// A repeated image id keeps its first record.
pub fn ingest(cfg: &PipelineConfig) -> Result<Ingested, PipelineError> {
    cfg.check_inputs()?;
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for input in &cfg.inputs {
        let path = &input.annotations;
        let reader = BufReader::new(File::open(path).map_err(PipelineError::io(path))?);
        let dims = || HeaderDims::new(&input.images, &input.extension);
        let parsed = match input.format {
            InputFormat::Coco | InputFormat::Object365 => {
                parse_coco(reader, &cfg.aliases, input.format.origin())
            }
            InputFormat::Oid => parse_oid_csv(
                reader,
                &dims(),
                &cfg.aliases,
                OidOptions {
                    min_confidence: input.min_confidence,
                },
            ),
            InputFormat::Crowdhuman => parse_odgt(reader, &dims()),
            InputFormat::DetectionImport => {
                parse_detection_import(reader, PipelineConfig::detection_min_confidence(input))
            }
        }?;
        let mut report = parsed.report;
        for mut rec in parsed.records {
            if !seen.insert(rec.image_id.clone()) {
                report.warn(format!(
                    "{}: duplicate image id {}, keeping the first",
                    path.display(),
                    rec.image_id
                ));
                continue;
            }
            rec.image_path = input.images.join(&rec.image_path);
            out.records.push(rec);
        }
        log::info!(
            "{}: {} images, {} person-labelled",
            path.display(),
            report.images_seen,
            report.records_emitted
        );
        out.report.merge(report);
    }
    Ok(out)
}

/// Blur-gate verdict for one decoded image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub laplacian_variance: f64,
    /// Per box, in record order, when gating crop regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_variances: Option<Vec<Option<f64>>>,
    pub passed: bool,
}

/// Boxes re-clamped to the decoded size, keyed by their index in the record.
fn effective_boxes(record: &SourceRecord, width: u32, height: u32) -> Vec<(usize, BBox)> {
    if (record.width, record.height) == (width, height) {
        return record.person_boxes.iter().copied().enumerate().collect();
    }
    log::warn!(
        "{}: annotated as {}x{}, decoded as {width}x{height}; boxes re-clamped",
        record.image_id,
        record.width,
        record.height
    );
    record
        .person_boxes
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.clamp_to(width, height).map(|b| (i, b)))
        .collect()
}

pub fn gate_image(
    record: &SourceRecord,
    img: &ImageBuffer,
    cfg: &PipelineConfig,
) -> Result<GateResult, PipelineError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let luma = to_luma(img);
    let var = laplacian_variance(&luma)?;
    let threshold = cfg.blur_variance_threshold;
    let (box_variances, passed) = match cfg.blur_scope {
        BlurScope::Image => (None, var >= threshold),
        BlurScope::Box => {
            let boxes = effective_boxes(record, w, h);
            let mut vars = vec![None; record.person_boxes.len()];
            for (i, b) in boxes {
                let region = crop(&luma, &squarify(&b, w, h))?;
                vars[i] = Some(laplacian_variance(&region)?);
            }
            let any = vars.iter().flatten().any(|&v| v >= threshold);
            (Some(vars), any)
        }
    };
    Ok(GateResult {
        image_id: record.image_id.clone(),
        width: w,
        height: h,
        laplacian_variance: var,
        box_variances,
        passed,
    })
}

/// Crop candidates of one image: rejected entries and crops awaiting scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CropPlan {
    pub rejected: Vec<ManifestEntry>,
    pub pending: Vec<ScoreRow>,
    pub boxes_total: usize,
    pub boxes_after_size_gate: usize,
    pub crops_after_nms: usize,
}

/// Squarify, size-gate and suppress overlaps. Crop ids are
/// `{image_id}#{box index}`.
pub fn propose_crops(
    record: &SourceRecord,
    gate: &GateResult,
    cfg: &PipelineConfig,
) -> Result<CropPlan, PipelineError> {
    let mut plan = CropPlan::default();
    let boxes = effective_boxes(record, gate.width, gate.height);
    let crop_id = |i: usize| format!("{}#{i}", record.image_id);
    let lap = |i: usize| match &gate.box_variances {
        Some(v) => v[i],
        None => Some(gate.laplacian_variance),
    };
    let reject = |i: usize, c: SquareCrop, status: Status| {
        ManifestEntry::rejected(
            crop_id(i),
            record.image_id.clone(),
            record.dataset_origin,
            c,
            lap(i),
            status,
        )
    };
    let squares: Vec<(usize, SquareCrop)> = boxes
        .iter()
        .map(|&(i, b)| (i, squarify(&b, gate.width, gate.height)))
        .collect();

    if !gate.passed {
        plan.rejected = squares
            .into_iter()
            .map(|(i, c)| reject(i, c, Status::FailedBlurGate))
            .collect();
        return Ok(plan);
    }
    plan.boxes_total = squares.len();

    let mut sized = Vec::new();
    for (i, c) in squares {
        let sharp = lap(i).is_some_and(|v| v >= cfg.blur_variance_threshold);
        if !sharp {
            plan.rejected.push(reject(i, c, Status::FailedBlurGate));
        } else if size_gate(&c, cfg.min_side) {
            sized.push((i, c));
        } else {
            plan.rejected.push(reject(i, c, Status::FailedSizeGate));
        }
    }
    plan.boxes_after_size_gate = sized.len();

    let crops: Vec<SquareCrop> = sized.iter().map(|&(_, c)| c).collect();
    let (kept, suppressed) = nms_indices(&crops, cfg.iou_threshold)?;
    for k in suppressed {
        let (i, c) = sized[k];
        plan.rejected.push(reject(i, c, Status::SuppressedNms));
    }
    plan.crops_after_nms = kept.len();
    for k in kept {
        let (i, c) = sized[k];
        plan.pending.push(ScoreRow {
            crop_id: crop_id(i),
            source_image_id: record.image_id.clone(),
            dataset: record.dataset_origin,
            crop: c,
            laplacian_variance: lap(i).unwrap_or(gate.laplacian_variance),
            scores: BTreeMap::new(),
            z: BTreeMap::new(),
            aggregate: None,
        });
    }
    plan.pending.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));
    Ok(plan)
}

/// Cut a crop and resize it to `size`², quantized to 8 bits.
pub fn make_crop(
    img: &ImageBuffer,
    rect: &SquareCrop,
    size: usize,
) -> Result<ImageBuffer, ImagingError> {
    let c = crop(img, rect)?;
    if c.width() == size {
        return Ok(c.quantized());
    }
    Ok(resize(&c, size, ResizeFilter::auto(c.width(), size))?.quantized())
}

/// In-core metric evaluation with the configured models.
#[derive(Debug, Clone)]
pub struct Scorer {
    metrics: Vec<String>,
    niqe: Cow<'static, NiqeModel>,
    svr: Cow<'static, SvrModel>,
}

impl Scorer {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let niqe = match &cfg.models.niqe {
            Some(p) => Cow::Owned(NiqeModel::load(p)?),
            None => Cow::Borrowed(NiqeModel::pristine()),
        };
        let svr = match (&cfg.models.brisque_svm, &cfg.models.brisque_range) {
            (Some(s), Some(r)) => Cow::Owned(SvrModel::load(s, r)?),
            _ => Cow::Borrowed(SvrModel::bundled()),
        };
        Ok(Scorer {
            metrics: cfg.in_core_metrics(),
            niqe,
            svr,
        })
    }

    pub fn metrics(&self) -> &[String] {
        &self.metrics
    }

    pub fn score(&self, img: &ImageBuffer) -> Result<BTreeMap<String, f64>, IqaError> {
        let mut out = BTreeMap::new();
        for m in &self.metrics {
            let v = match m.as_str() {
                "niqe" => niqe_score(img, &self.niqe)?,
                "brisque" => brisque(img, &self.svr)?,
                other => {
                    return Err(IqaError::InvalidParameter(format!(
                        "unknown metric {other}"
                    )))
                }
            };
            if !v.is_finite() {
                return Err(IqaError::NonFinite);
            }
            out.insert(m.clone(), v);
        }
        Ok(out)
    }
}

/// Everything the per-image stages produced for one source image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unreadable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateResult>,
    pub rejected: Vec<ManifestEntry>,
    pub scored: Vec<ScoreRow>,
    pub boxes_total: usize,
    pub boxes_after_size_gate: usize,
    pub crops_after_nms: usize,
}

pub(crate) fn open_image(
    record: &SourceRecord,
    cfg: &PipelineConfig,
) -> Result<Option<ImageBuffer>, PipelineError> {
    match ImageBuffer::open(&record.image_path) {
        Ok(img) => Ok(Some(img)),
        Err(e) => {
            let message = format!("{}: {e}", record.image_path.display());
            match cfg.on_unreadable {
                UnreadablePolicy::Fail => Err(PipelineError::Unreadable {
                    image_id: record.image_id.clone(),
                    message,
                }),
                UnreadablePolicy::Skip => {
                    log::warn!("skipping {}: {message}", record.image_id);
                    Ok(None)
                }
            }
        }
    }
}

pub(crate) fn unreadable_outcome(record: &SourceRecord) -> ImageOutcome {
    ImageOutcome {
        image_id: record.image_id.clone(),
        unreadable: Some(record.image_path.display().to_string()),
        ..Default::default()
    }
}

/// Write a crop and score it. Scoring failures become `FailedScoring`
/// entries; write failures are errors.
pub(crate) fn crop_and_score(
    img: &ImageBuffer,
    rows: Vec<ScoreRow>,
    cfg: &PipelineConfig,
    scorer: &Scorer,
    crops_dir: &Path,
    out: &mut ImageOutcome,
) -> Result<(), PipelineError> {
    for mut row in rows {
        let c = make_crop(img, &row.crop, cfg.crop_size)?;
        let path = crops_dir.join(crop_file_name(&row.crop_id, &cfg.crop_format));
        c.save(&path)?;
        match scorer.score(&c) {
            Ok(scores) => {
                row.scores = scores;
                out.scored.push(row);
            }
            Err(e) => {
                log::warn!("{}: scoring failed: {e}", row.crop_id);
                out.rejected
                    .push(ManifestEntry::from_row(&row, Status::FailedScoring));
            }
        }
    }
    Ok(())
}

/// Decode, gate, crop and score one source image.
pub fn process_image(
    record: &SourceRecord,
    cfg: &PipelineConfig,
    scorer: &Scorer,
    crops_dir: &Path,
) -> Result<ImageOutcome, PipelineError> {
    let Some(img) = open_image(record, cfg)? else {
        return Ok(unreadable_outcome(record));
    };
    let gate = gate_image(record, &img, cfg)?;
    let plan = propose_crops(record, &gate, cfg)?;
    let mut out = ImageOutcome {
        image_id: record.image_id.clone(),
        unreadable: None,
        gate: Some(gate),
        rejected: plan.rejected,
        scored: Vec::new(),
        boxes_total: plan.boxes_total,
        boxes_after_size_gate: plan.boxes_after_size_gate,
        crops_after_nms: plan.crops_after_nms,
    };
    crop_and_score(&img, plan.pending, cfg, scorer, crops_dir, &mut out)?;
    Ok(out)
}

/// Standardize, rank and threshold a fully scored table.
pub fn select(
    table: &ScoreTable,
    cfg: &PipelineConfig,
) -> Result<SelectionManifest, PipelineError> {
    let normalized = normalize(table, &cfg.metrics)?;
    Ok(select_top(
        &normalized,
        cfg.selection_fraction,
        &cfg.metrics,
    )?)
}
