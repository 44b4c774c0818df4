use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Curate quality-ranked square human crops from object-detection corpora.
///
/// Flags override the matching config-file values. The config path comes from
/// --config, else the HQACF_CONFIG environment variable.
#[derive(Debug, Parser)]
#[command(
    name = "hqacf",
    version,
    propagate_version = true,
    max_term_width = 100
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse annotation sources into records.jsonl
    Ingest(Common),
    /// Blur-gate ingested images into gate.jsonl
    Gate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gate: GateFlags,
    },
    /// Squarify, size-gate and suppress boxes; write crops and pending.jsonl
    Crop {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gate: GateFlags,
    },
    /// Score pending crops with the in-core metrics into scores.jsonl
    Score(Common),
    /// Merge an external crop_id,<metric...> CSV into scores.jsonl
    IngestScores {
        #[command(flatten)]
        common: Common,
        /// External scores CSV
        #[arg(long, value_name = "PATH")]
        csv: PathBuf,
    },
    /// Standardize, rank and threshold; write manifest.jsonl and curated/
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: SelectFlags,
    },
    /// Synthesize low-quality counterparts of curated crops into pairs/
    Degrade {
        #[command(flatten)]
        common: Common,
        /// Degradation seed [config default: degradation.seed, 0]
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Emit 128x128 low-quality images instead of 512x512 [default: off]
        #[arg(long)]
        x4: bool,
    },
    /// Fit a NIQE pristine model from a directory of images
    NiqeFit {
        #[command(flatten)]
        common: Common,
        /// Directory of pristine images (png, jpg, jpeg)
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Patch side in pixels
        #[arg(long, value_name = "N", default_value_t = 96)]
        patch_size: usize,
        /// Fraction of sharpest patches kept per image
        #[arg(long, value_name = "F", default_value_t = 0.75, value_parser = unit_open_closed)]
        sharpness_fraction: f64,
    },
    /// Print the funnel table from stats.json
    Report(Common),
    /// Run every stage with checkpoints
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gate: GateFlags,
        #[command(flatten)]
        select: SelectFlags,
        /// Checkpoint directory [config default: checkpoint_dir, <out>/checkpoints]
        #[arg(long, value_name = "DIR")]
        checkpoints: Option<PathBuf>,
        /// Continue from existing checkpoints [default: off]
        #[arg(long)]
        resume: bool,
    },
    /// Continue an interrupted run (same as run --resume)
    Resume {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gate: GateFlags,
        #[command(flatten)]
        select: SelectFlags,
        /// Checkpoint directory [config default: checkpoint_dir, <out>/checkpoints]
        #[arg(long, value_name = "DIR")]
        checkpoints: Option<PathBuf>,
    },
    /// Split selected crops into train.jsonl and holdout.jsonl by source image
    HoldoutSplit {
        #[command(flatten)]
        common: Common,
        /// Split seed [config default: holdout.seed, 0]
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Datasets held out entirely, comma separated [config default: holdout.datasets, none]
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        datasets: Option<Vec<String>>,
        /// Share of remaining source images held out [config default: holdout.fraction, none]
        #[arg(long, value_name = "F", value_parser = unit_closed)]
        holdout_fraction: Option<f64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline config file (TOML)
    #[arg(long, env = "HQACF_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [config default: output_dir]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads [config default: worker_count, 1]
    #[arg(long, value_name = "N", value_parser = positive)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GateFlags {
    /// Minimum Laplacian variance [config default: blur_variance_threshold, 100]
    #[arg(long, value_name = "V", value_parser = non_negative)]
    pub blur_threshold: Option<f64>,
    /// Minimum crop side in pixels [config default: min_side, 384]
    #[arg(long, value_name = "PX", value_parser = strictly_positive)]
    pub min_side: Option<f64>,
    /// NMS overlap threshold [config default: iou_threshold, 0.45]
    #[arg(long, value_name = "T", value_parser = unit_closed)]
    pub iou_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectFlags {
    /// Share of scored crops kept [config default: selection_fraction, 1/3]
    #[arg(long, value_name = "F", value_parser = unit_open_closed)]
    pub fraction: Option<f64>,
    /// External scores CSV merged before selection [config default: scores_csv, none]
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err("must be a whole number of at least 1".into()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be non-negative".into())
    }
}

fn strictly_positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

fn unit_closed(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be in [0, 1]".into())
    }
}

fn unit_open_closed(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("must be in (0, 1]".into())
    }
}
