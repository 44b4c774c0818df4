use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{degrade, DegradationConfig, DegradeError, DrawnParams};
use crate::imaging::ImageBuffer;
use crate::selection::{crop_file_name, SelectionManifest};

/// JPEG codec used by the compression stage.
pub const CODEC: &str = "image 0.25 JpegEncoder + zune-jpeg decoder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub crop_id: String,
    pub hq_path: PathBuf,
    pub lq_path: PathBuf,
    pub seed: u64,
    pub codec: String,
    pub params: DrawnParams,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairReport {
    pub records: Vec<PairRecord>,
    /// `(crop_id, reason)` for entries whose HQ file could not be used.
    pub skipped: Vec<(String, String)>,
}

/// Degrade every selected crop found under `hq_dir`.
///
/// LQ images go to `out_dir/lq/` under the HQ file name and the pair records
/// to `out_dir/pairs.jsonl`, in crop id order.
pub fn build_pairs(
    manifest: &SelectionManifest,
    hq_dir: &Path,
    cfg: &DegradationConfig,
    out_dir: &Path,
) -> Result<PairReport, DegradeError> {
    cfg.validate()?;
    let lq_dir = out_dir.join("lq");
    fs::create_dir_all(&lq_dir)?;
    let mut entries: Vec<_> = manifest.selected().collect();
    entries.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));

    let results: Vec<Result<PairRecord, (String, String)>> = entries
        .par_iter()
        .map(|e| {
            let name = crop_file_name(&e.crop_id, "png");
            let hq_path = hq_dir.join(&name);
            let lq_path = lq_dir.join(&name);
            let fail = |msg: String| (e.crop_id.clone(), msg);
            let hq = ImageBuffer::open(&hq_path).map_err(|err| fail(err.to_string()))?;
            let (lq, params) =
                degrade(&hq, cfg, &e.crop_id).map_err(|err| fail(err.to_string()))?;
            lq.save(&lq_path).map_err(|err| fail(err.to_string()))?;
            Ok(PairRecord {
                crop_id: e.crop_id.clone(),
                hq_path,
                lq_path,
                seed: cfg.seed,
                codec: CODEC.to_string(),
                params,
            })
        })
        .collect();

    let mut report = PairReport::default();
    for r in results {
        match r {
            Ok(rec) => report.records.push(rec),
            Err((id, reason)) => {
                log::warn!("pair {id} skipped: {reason}");
                report.skipped.push((id, reason));
            }
        }
    }
    let mut w = BufWriter::new(fs::File::create(out_dir.join("pairs.jsonl"))?);
    for rec in &report.records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(report)
}
