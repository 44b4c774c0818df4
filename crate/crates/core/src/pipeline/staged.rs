//! The pipeline one stage at a time, with artifacts in the output directory
//! passed between stages.
//!
//! Fused runs and staged runs agree: crops are quantized before scoring and
//! stored losslessly (PNG), so scoring the stored crop gives the same values.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::write_atomic;
use super::run::{create_dir, read_jsonl, select_and_write, thread_pool, write_jsonl};
use super::stages::{gate_image, ingest, make_crop, open_image, propose_crops, GateResult, Scorer};
use super::{files, FunnelStats, PipelineConfig, PipelineError};
use crate::annotations::SourceRecord;
use crate::imaging::ImageBuffer;
use crate::selection::{
    crop_file_name, ingest_external_scores, IngestReport, ManifestEntry, ScoreRow, ScoreTable,
    SelectionManifest, Status,
};

fn stats_path(cfg: &PipelineConfig) -> std::path::PathBuf {
    cfg.output_dir.join(files::STATS)
}

fn timed(stats: &mut FunnelStats, stage: &str, start: Instant) {
    stats
        .stage_seconds
        .insert(stage.into(), start.elapsed().as_secs_f64());
}

fn read_table(path: &Path) -> Result<ScoreTable, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf()));
    }
    let file = File::open(path).map_err(PipelineError::io(path))?;
    Ok(ScoreTable::read_jsonl(std::io::BufReader::new(file))?)
}

fn write_table(table: &ScoreTable, path: &Path) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    table.write_jsonl(&mut buf)?;
    write_atomic(path, &buf)
}

/// Parse the inputs into `records.jsonl`. Starts a fresh `stats.json`.
pub fn ingest_stage(cfg: &PipelineConfig) -> Result<FunnelStats, PipelineError> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let t = Instant::now();
    let ingested = ingest(cfg)?;
    write_jsonl(&cfg.output_dir.join(files::RECORDS), &ingested.records)?;
    let mut stats = FunnelStats {
        collected: ingested.report.images_seen,
        person_labeled: ingested.records.len(),
        ..Default::default()
    };
    timed(&mut stats, "ingest", t);
    stats.save(&cfg.output_dir)?;
    Ok(stats)
}

/// Blur-gate every record into `gate.jsonl`. Unreadable images get no line.
pub fn gate_stage(cfg: &PipelineConfig) -> Result<FunnelStats, PipelineError> {
    cfg.validate()?;
    let t = Instant::now();
    let records: Vec<SourceRecord> = read_jsonl(&cfg.output_dir.join(files::RECORDS))?;
    let gates: Vec<Option<GateResult>> = thread_pool(cfg)?.install(|| {
        records
            .par_iter()
            .map(|r| match open_image(r, cfg)? {
                Some(img) => gate_image(r, &img, cfg).map(Some),
                None => Ok(None),
            })
            .collect::<Result<_, PipelineError>>()
    })?;
    let mut stats = FunnelStats::load_or_default(&stats_path(cfg))?;
    stats.unreadable_images = gates.iter().filter(|g| g.is_none()).count();
    stats.passed_blur_gate = gates.iter().flatten().filter(|g| g.passed).count();
    write_jsonl(&cfg.output_dir.join(files::GATE), gates.iter().flatten())?;
    timed(&mut stats, "gate", t);
    stats.save(&cfg.output_dir)?;
    Ok(stats)
}

/// Propose, write crops, and list them in `pending.jsonl`. Rejections go to
/// `rejected.jsonl`.
pub fn crop_stage(cfg: &PipelineConfig) -> Result<FunnelStats, PipelineError> {
    cfg.validate()?;
    let t = Instant::now();
    let records: Vec<SourceRecord> = read_jsonl(&cfg.output_dir.join(files::RECORDS))?;
    let gates: Vec<GateResult> = read_jsonl(&cfg.output_dir.join(files::GATE))?;
    let gates: HashMap<&str, &GateResult> =
        gates.iter().map(|g| (g.image_id.as_str(), g)).collect();
    let crops_dir = cfg.output_dir.join(files::CROPS_DIR);
    create_dir(&crops_dir)?;

    let plans = thread_pool(cfg)?.install(|| {
        records
            .par_iter()
            .filter_map(|r| gates.get(r.image_id.as_str()).map(|g| (r, *g)))
            .map(|(r, g)| {
                let plan = propose_crops(r, g, cfg)?;
                if !plan.pending.is_empty() {
                    if let Some(img) = open_image(r, cfg)? {
                        for row in &plan.pending {
                            let c = make_crop(&img, &row.crop, cfg.crop_size)?;
                            c.save(crops_dir.join(crop_file_name(&row.crop_id, &cfg.crop_format)))?;
                        }
                    }
                }
                Ok(plan)
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;

    let mut stats = FunnelStats::load_or_default(&stats_path(cfg))?;
    stats.boxes_total = plans.iter().map(|p| p.boxes_total).sum();
    stats.boxes_after_size_gate = plans.iter().map(|p| p.boxes_after_size_gate).sum();
    stats.crops_after_nms = plans.iter().map(|p| p.crops_after_nms).sum();
    write_jsonl(
        &cfg.output_dir.join(files::PENDING),
        plans.iter().flat_map(|p| &p.pending),
    )?;
    write_jsonl(
        &cfg.output_dir.join(files::REJECTED),
        plans.iter().flat_map(|p| &p.rejected),
    )?;
    timed(&mut stats, "crop", t);
    stats.save(&cfg.output_dir)?;
    Ok(stats)
}

/// Score every pending crop with the in-core metrics into `scores.jsonl`.
pub fn score_stage(cfg: &PipelineConfig) -> Result<FunnelStats, PipelineError> {
    cfg.validate()?;
    let t = Instant::now();
    let pending: Vec<ScoreRow> = read_jsonl(&cfg.output_dir.join(files::PENDING))?;
    let mut rejected: Vec<ManifestEntry> = read_jsonl(&cfg.output_dir.join(files::REJECTED))?;
    rejected.retain(|e| e.status != Status::FailedScoring);
    let crops_dir = cfg.output_dir.join(files::CROPS_DIR);
    let scorer = Scorer::from_config(cfg)?;

    let results = thread_pool(cfg)?.install(|| {
        pending
            .into_par_iter()
            .map(|mut row| {
                let img = ImageBuffer::open(
                    crops_dir.join(crop_file_name(&row.crop_id, &cfg.crop_format)),
                )?;
                Ok(match scorer.score(&img) {
                    Ok(scores) => {
                        row.scores = scores;
                        Ok(row)
                    }
                    Err(e) => {
                        log::warn!("{}: scoring failed: {e}", row.crop_id);
                        Err(ManifestEntry::from_row(&row, Status::FailedScoring))
                    }
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;

    let mut table = ScoreTable::new();
    for r in results {
        match r {
            Ok(row) => table.insert(row)?,
            Err(entry) => rejected.push(entry),
        }
    }
    write_table(&table, &cfg.output_dir.join(files::SCORES_JSONL))?;
    write_jsonl(&cfg.output_dir.join(files::REJECTED), &rejected)?;
    let mut stats = FunnelStats::load_or_default(&stats_path(cfg))?;
    stats.scored = table.len();
    timed(&mut stats, "score", t);
    stats.save(&cfg.output_dir)?;
    Ok(stats)
}

/// Merge an external `crop_id,<metric...>` CSV into `scores.jsonl`.
pub fn ingest_scores_stage(
    cfg: &PipelineConfig,
    csv: &Path,
) -> Result<IngestReport, PipelineError> {
    let path = cfg.output_dir.join(files::SCORES_JSONL);
    let mut table = read_table(&path)?;
    let reader = File::open(csv).map_err(PipelineError::io(csv))?;
    let report = ingest_external_scores(&mut table, reader, &cfg.external_metrics())?;
    write_table(&table, &path)?;
    Ok(report)
}

/// Select from `scores.jsonl` and write the manifest and curated crops.
pub fn select_stage(
    cfg: &PipelineConfig,
) -> Result<(FunnelStats, Option<SelectionManifest>), PipelineError> {
    cfg.validate()?;
    let t = Instant::now();
    let table = read_table(&cfg.output_dir.join(files::SCORES_JSONL))?;
    let rejected: Vec<ManifestEntry> = read_jsonl(&cfg.output_dir.join(files::REJECTED))?;
    let mut stats = FunnelStats::load_or_default(&stats_path(cfg))?;
    let manifest = select_and_write(cfg, table, rejected, &mut stats)?;
    timed(&mut stats, "select", t);
    stats.save(&cfg.output_dir)?;
    Ok((stats, manifest))
}

/// Funnel table from `stats.json`.
pub fn report(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    let path = stats_path(cfg);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path));
    }
    Ok(FunnelStats::load(&path)?.table())
}
