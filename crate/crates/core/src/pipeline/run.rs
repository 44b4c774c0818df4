use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::{write_atomic, Checkpoint};
use super::stages::{ingest, process_image, select, ImageOutcome, Scorer};
use super::{files, FunnelStats, PipelineConfig, PipelineError};
use crate::annotations::SourceRecord;
use crate::selection::{
    crop_file_name, ingest_external_scores, status_counts, top_count, ManifestEntry, ScoreTable,
    SelectionManifest, Status,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Continue from existing checkpoints instead of starting over.
    pub resume: bool,
    /// Stop with [`PipelineError::Halted`] after this many shards have been
    /// processed in this invocation.
    pub halt_after_shards: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub stats: FunnelStats,
    /// `None` when external metrics are configured but not yet available.
    pub manifest: Option<SelectionManifest>,
    /// Shards taken from checkpoints rather than recomputed.
    pub reused_shards: usize,
}

pub(crate) fn thread_pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(PipelineError::io(path))
}

pub(crate) fn write_jsonl<T: serde::Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("serializable");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(PipelineError::json(path)))
        .collect()
}

/// Run every stage over the configured inputs.
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let out_dir = &cfg.output_dir;
    let crops_dir = out_dir.join(files::CROPS_DIR);
    let ck_dir = cfg.checkpoint_dir();
    create_dir(out_dir)?;
    create_dir(&ck_dir)?;
    let mut stats = FunnelStats::default();

    let t = Instant::now();
    let ingested = ingest(cfg)?;
    stats.collected = ingested.report.images_seen;
    stats.person_labeled = ingested.records.len();
    write_jsonl(&out_dir.join(files::RECORDS), &ingested.records)?;
    stats
        .stage_seconds
        .insert("ingest".into(), t.elapsed().as_secs_f64());

    let shards: Vec<&[SourceRecord]> = ingested.records.chunks(cfg.shard_size).collect();
    let hash = cfg.hash();
    let mut ck = match Checkpoint::load(&ck_dir)? {
        Some(ck) if opts.resume => {
            if ck.config_hash != hash {
                return Err(PipelineError::CheckpointMismatch {
                    dir: ck_dir,
                    expected: hash,
                    found: ck.config_hash,
                });
            }
            if ck.shard_count != shards.len() {
                return Err(PipelineError::Config(format!(
                    "checkpoints cover {} shards but the inputs now give {}",
                    ck.shard_count,
                    shards.len()
                )));
            }
            log::info!(
                "resuming: {} of {} shards done",
                ck.completed_shards.len(),
                shards.len()
            );
            ck
        }
        _ => {
            Checkpoint::clear(&ck_dir)?;
            if crops_dir.exists() {
                fs::remove_dir_all(&crops_dir).map_err(PipelineError::io(&crops_dir))?;
            }
            let ck = Checkpoint::new(hash, shards.len());
            ck.save(&ck_dir)?;
            ck
        }
    };
    create_dir(&crops_dir)?;

    let t = Instant::now();
    let pool = thread_pool(cfg)?;
    let scorer = Scorer::from_config(cfg)?;
    let reused = ck.completed_shards.len();
    let mut processed = 0;
    for (i, shard) in shards.iter().enumerate() {
        if ck.is_done(i) {
            continue;
        }
        if opts.halt_after_shards.is_some_and(|n| processed >= n) {
            return Err(PipelineError::Halted(processed));
        }
        let outcomes: Vec<ImageOutcome> = pool.install(|| {
            shard
                .par_iter()
                .map(|r| process_image(r, cfg, &scorer, &crops_dir))
                .collect::<Result<_, _>>()
        })?;
        Checkpoint::save_shard(&ck_dir, i, &outcomes)?;
        ck.completed_shards.push(i);
        ck.save(&ck_dir)?;
        processed += 1;
        log::info!(
            "shard {}/{} done ({} images)",
            i + 1,
            shards.len(),
            shard.len()
        );
    }
    stats
        .stage_seconds
        .insert("process".into(), t.elapsed().as_secs_f64());

    let mut table = ScoreTable::new();
    let mut rejected = Vec::new();
    let mut gates = Vec::new();
    for i in 0..shards.len() {
        for o in Checkpoint::load_shard(&ck_dir, i)? {
            accumulate(&mut stats, &o);
            gates.extend(o.gate);
            rejected.extend(o.rejected);
            for row in o.scored {
                table.insert(row)?;
            }
        }
    }
    write_jsonl(&out_dir.join(files::GATE), &gates)?;

    let t = Instant::now();
    let manifest = select_and_write(cfg, table, rejected, &mut stats)?;
    stats
        .stage_seconds
        .insert("select".into(), t.elapsed().as_secs_f64());
    stats.save(out_dir)?;
    log::info!("funnel:\n{}", stats.table());
    Ok(RunOutcome {
        stats,
        manifest,
        reused_shards: reused,
    })
}

pub(crate) fn accumulate(stats: &mut FunnelStats, o: &ImageOutcome) {
    if o.unreadable.is_some() {
        stats.unreadable_images += 1;
    }
    if o.gate.as_ref().is_some_and(|g| g.passed) {
        stats.passed_blur_gate += 1;
    }
    stats.boxes_total += o.boxes_total;
    stats.boxes_after_size_gate += o.boxes_after_size_gate;
    stats.crops_after_nms += o.crops_after_nms;
    stats.scored += o.scored.len();
}

/// Write score tables, merge external scores, select, and write the manifest
/// and curated crops. Returns `None` while external metrics are missing.
pub fn select_and_write(
    cfg: &PipelineConfig,
    mut table: ScoreTable,
    rejected: Vec<ManifestEntry>,
    stats: &mut FunnelStats,
) -> Result<Option<SelectionManifest>, PipelineError> {
    let out_dir = &cfg.output_dir;
    let crops_dir = out_dir.join(files::CROPS_DIR);
    if let Some(csv) = &cfg.scores_csv {
        let reader = File::open(csv).map_err(PipelineError::io(csv))?;
        let report = ingest_external_scores(&mut table, reader, &cfg.external_metrics())?;
        log::info!(
            "merged {} external score rows from {}",
            report.rows,
            csv.display()
        );
    }

    let metric_names: Vec<String> = cfg.metrics.iter().map(|m| m.name.clone()).collect();
    write_table(&table, &metric_names, out_dir)?;
    write_crop_list(&table, cfg, &crops_dir, &out_dir.join(files::CROP_LIST))?;
    write_jsonl(&out_dir.join(files::REJECTED), &rejected)?;

    let missing: Vec<String> = cfg
        .external_metrics()
        .into_iter()
        .filter(|m| table.rows().any(|r| !r.scores.contains_key(m)))
        .collect();
    if !missing.is_empty() {
        log::warn!(
            "external scores for {} missing: write {} to a CSV and set scores_csv, then run select",
            missing.join(", "),
            files::CROP_LIST
        );
        stats.top_fraction = 0;
        stats.selected = 0;
        stats.rejections.clear();
        stats.save(out_dir)?;
        return Ok(None);
    }

    let mut manifest = if table.is_empty() {
        SelectionManifest::default()
    } else {
        select(&table, cfg)?
    };
    stats.top_fraction = top_count(cfg.selection_fraction, table.len())?;
    stats.selected = manifest.selected().count();
    manifest.extend(SelectionManifest::new(rejected));
    manifest.sort();
    stats.rejections = status_counts(&manifest)
        .into_iter()
        .filter(|(s, _)| *s != Status::Selected)
        .map(|(s, n)| (s.to_string(), n))
        .collect();

    let mut buf = Vec::new();
    manifest.write_jsonl(&mut buf)?;
    write_atomic(&out_dir.join(files::MANIFEST), &buf)?;
    write_curated(
        &manifest,
        cfg,
        &crops_dir,
        &out_dir.join(files::CURATED_DIR),
    )?;
    stats.save(out_dir)?;
    Ok(Some(manifest))
}

fn write_table(
    table: &ScoreTable,
    metrics: &[String],
    out_dir: &Path,
) -> Result<(), PipelineError> {
    let present = table.metric_names();
    let cols: Vec<String> = metrics
        .iter()
        .filter(|m| present.contains(*m))
        .cloned()
        .collect();
    let mut buf = Vec::new();
    table.write_jsonl(&mut buf)?;
    write_atomic(&out_dir.join(files::SCORES_JSONL), &buf)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &cols)?;
    write_atomic(&out_dir.join(files::SCORES_CSV), &buf)
}

/// `crop_id<TAB>path` for every scored crop, the input of external scorers.
fn write_crop_list(
    table: &ScoreTable,
    cfg: &PipelineConfig,
    crops_dir: &Path,
    path: &Path,
) -> Result<(), PipelineError> {
    let crops_dir = std::path::absolute(crops_dir).map_err(PipelineError::io(crops_dir))?;
    let mut w = BufWriter::new(File::create(path).map_err(PipelineError::io(path))?);
    for row in table.rows() {
        let file = crops_dir.join(crop_file_name(&row.crop_id, &cfg.crop_format));
        writeln!(w, "{}\t{}", row.crop_id, file.display()).map_err(PipelineError::io(path))?;
    }
    w.flush().map_err(PipelineError::io(path))
}

fn write_curated(
    manifest: &SelectionManifest,
    cfg: &PipelineConfig,
    crops_dir: &Path,
    curated: &Path,
) -> Result<(), PipelineError> {
    if curated.exists() {
        fs::remove_dir_all(curated).map_err(PipelineError::io(curated))?;
    }
    create_dir(curated)?;
    for e in manifest.selected() {
        let name = crop_file_name(&e.crop_id, &cfg.crop_format);
        let from = crops_dir.join(&name);
        fs::copy(&from, curated.join(&name)).map_err(PipelineError::io(&from))?;
    }
    Ok(())
}
