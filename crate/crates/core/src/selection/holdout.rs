use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ManifestEntry, SelectionError, SelectionManifest};
use crate::annotations::DatasetOrigin;

/// Which selected crops go to the held-out set.
///
/// A crop is held out when its dataset is listed in `datasets`, or when the
/// hash of its source image id (salted with `seed`) falls below `fraction`.
/// Both rules key on the source image, so the two sides never share one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSpec {
    #[serde(default)]
    pub datasets: Vec<DatasetOrigin>,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoldoutSplit {
    pub train: Vec<ManifestEntry>,
    pub holdout: Vec<ManifestEntry>,
}

fn unit_hash(seed: u64, key: &str) -> f64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(key.as_bytes())
        .finalize();
    let v = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// Split the selected entries of a manifest.
pub fn holdout_split(
    manifest: &SelectionManifest,
    spec: &HoldoutSpec,
) -> Result<HoldoutSplit, SelectionError> {
    if let Some(f) = spec.fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(SelectionError::Spec(format!(
                "holdout fraction {f} outside [0, 1]"
            )));
        }
    }
    let mut out = HoldoutSplit::default();
    for e in manifest.selected() {
        let held = spec.datasets.contains(&e.dataset)
            || spec
                .fraction
                .is_some_and(|f| unit_hash(spec.seed, &e.source_image_id) < f);
        if held {
            out.holdout.push(e.clone());
        } else {
            out.train.push(e.clone());
        }
    }
    Ok(out)
}
