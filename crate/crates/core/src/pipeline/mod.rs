//! Sharded, checkpointed orchestration of the curation stages.
//!
//! Per-image work (decode, blur gate, crop proposal, crop extraction and
//! in-core scoring) runs inside shards on a worker pool. Selection runs once
//! after every shard has finished, since standardization needs the whole
//! candidate pool.

mod checkpoint;
mod config;
mod run;
pub mod staged;
mod stages;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

use crate::annotations::ParseError;
use crate::boxgeom::BoxError;
use crate::degrade::DegradeError;
use crate::imaging::ImagingError;
use crate::iqa::IqaError;
use crate::selection::SelectionError;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{
    BlurScope, InputFormat, InputSpec, ModelPaths, PipelineConfig, UnreadablePolicy,
    CONFIG_VERSION, IN_CORE_METRICS,
};
pub use run::{run, select_and_write, RunOptions, RunOutcome};
pub use stages::{
    gate_image, ingest, make_crop, process_image, propose_crops, select, CropPlan, GateResult,
    ImageOutcome, Ingested, Scorer,
};
pub use stats::FunnelStats;

/// Artifact names inside the output directory.
pub mod files {
    pub const RECORDS: &str = "records.jsonl";
    pub const GATE: &str = "gate.jsonl";
    pub const PENDING: &str = "pending.jsonl";
    pub const SCORES_JSONL: &str = "scores.jsonl";
    pub const SCORES_CSV: &str = "scores.csv";
    pub const CROP_LIST: &str = "crop_list.tsv";
    pub const REJECTED: &str = "rejected.jsonl";
    pub const MANIFEST: &str = "manifest.jsonl";
    pub const STATS: &str = "stats.json";
    pub const FUNNEL: &str = "funnel.txt";
    pub const CROPS_DIR: &str = "crops";
    pub const CURATED_DIR: &str = "curated";
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Geometry(#[from] BoxError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Iqa(#[from] IqaError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("unreadable image {image_id}: {message}")]
    Unreadable { image_id: String, message: String },
    #[error(
        "checkpoints in {} were written with config hash {found}, current config hashes to {expected}; \
         restore the original settings or start a fresh run",
        .dir.display()
    )]
    CheckpointMismatch {
        dir: PathBuf,
        expected: String,
        found: String,
    },
    #[error("missing {}: run the earlier stage first", .0.display())]
    MissingArtifact(PathBuf),
    #[error("halted after {0} shard(s)")]
    Halted(usize),
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        match self {
            PipelineError::Config(_)
            | PipelineError::Geometry(_)
            | PipelineError::CheckpointMismatch { .. } => true,
            PipelineError::Selection(e) => e.is_config(),
            PipelineError::Degrade(e) => e.is_config(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }

    pub(crate) fn json(
        path: impl Into<PathBuf>,
    ) -> impl FnOnce(serde_json::Error) -> PipelineError {
        let path = path.into();
        move |e| PipelineError::Json {
            path,
            message: e.to_string(),
        }
    }
}
