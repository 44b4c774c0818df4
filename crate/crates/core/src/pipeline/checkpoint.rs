use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ImageOutcome, PipelineError};

pub const CHECKPOINT_VERSION: u32 = 1;
const STATE: &str = "state.json";

/// Progress of the per-image stages. Shard results live next to it as
/// `shard_NNNNN.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub stage: String,
    pub config_hash: String,
    pub shard_count: usize,
    pub completed_shards: Vec<usize>,
}

/// Write via a temporary file and rename, so a crash leaves either the old or
/// the new content.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(PipelineError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(PipelineError::io(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(PipelineError::io(path))?;
    serde_json::from_slice(&bytes).map_err(PipelineError::json(path))
}

fn shard_path(dir: &Path, shard: usize) -> PathBuf {
    dir.join(format!("shard_{shard:05}.json"))
}

impl Checkpoint {
    pub fn new(config_hash: String, shard_count: usize) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            stage: "scored".into(),
            config_hash,
            shard_count,
            completed_shards: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(STATE);
        if !path.exists() {
            return Ok(None);
        }
        let ck: Checkpoint = read_json(&path)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(PipelineError::Config(format!(
                "{}: checkpoint version {} is not supported",
                path.display(),
                ck.version
            )));
        }
        Ok(Some(ck))
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_vec_pretty(self).expect("serializable");
        write_atomic(&dir.join(STATE), &json)
    }

    pub fn is_done(&self, shard: usize) -> bool {
        self.completed_shards.contains(&shard)
    }

    /// Remove the state file and every shard file.
    pub fn clear(dir: &Path) -> Result<(), PipelineError> {
        if !dir.exists() {
            return Ok(());
        }
        for entry in fs::read_dir(dir).map_err(PipelineError::io(dir))? {
            let path = entry.map_err(PipelineError::io(dir))?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if name == STATE
                || (name.starts_with("shard_")
                    && (name.ends_with(".json") || name.ends_with(".tmp")))
            {
                fs::remove_file(&path).map_err(PipelineError::io(&path))?;
            }
        }
        Ok(())
    }

    pub(crate) fn save_shard(
        dir: &Path,
        shard: usize,
        outcomes: &[ImageOutcome],
    ) -> Result<(), PipelineError> {
        let json = serde_json::to_vec(outcomes).expect("serializable");
        write_atomic(&shard_path(dir, shard), &json)
    }

    pub(crate) fn load_shard(dir: &Path, shard: usize) -> Result<Vec<ImageOutcome>, PipelineError> {
        read_json(&shard_path(dir, shard))
    }
}
