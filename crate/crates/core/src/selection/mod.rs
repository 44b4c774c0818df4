//! Score tables, standardization, top-fraction ranking and the curated
//! manifest.
//!
//! Metric values are standardized per column after flipping lower-is-better
//! metrics, averaged into one aggregate, ranked, cut to the top fraction and
//! finally filtered by raw-value thresholds. Rows that fail a threshold are
//! not replaced by lower-ranked ones.

mod holdout;
mod manifest;
mod rank;
mod table;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use holdout::{holdout_split, HoldoutSpec, HoldoutSplit};
pub use manifest::{
    crop_file_name, status_counts, ManifestEntry, SelectionManifest, Status, MANIFEST_VERSION,
};
pub use rank::{normalize, select_top, top_count, DEFAULT_FRACTION};
pub use table::{ingest_external_scores, IngestReport, ScoreRow, ScoreTable};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("selection fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error("metric spec: {0}")]
    Spec(String),
    #[error("need at least 2 rows to normalize, got {0}")]
    TooFewRows(usize),
    #[error("degenerate metric {0}")]
    Degenerate(String),
    #[error("crop {crop_id} has no value for metric {metric}")]
    MissingScore { crop_id: String, metric: String },
    #[error("crop {crop_id}: non-finite value for metric {metric}")]
    NonFinite { crop_id: String, metric: String },
    #[error("table is not normalized")]
    NotNormalized,
    #[error("duplicate crop id {0}")]
    DuplicateCrop(String),
    #[error("scores CSV is missing column {0}")]
    MissingColumn(String),
    #[error("scores CSV names {} unknown crop ids: {}", .0.len(), .0.join(", "))]
    UnknownCrops(Vec<String>),
    #[error("scores CSV line {line}: {message}")]
    BadValue { line: u64, message: String },
    #[error("reading scores CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest line {line}: {source}")]
    Manifest {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SelectionError {
    pub fn is_config(&self) -> bool {
        matches!(self, SelectionError::Fraction(_) | SelectionError::Spec(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    #[default]
    InCore,
    External,
}

/// One metric taking part in selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub direction: Direction,
    /// Pass condition on the raw value: `>=` for higher-better, `<=` for
    /// lower-better.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub source: MetricSource,
}

impl MetricSpec {
    pub fn new(name: impl Into<String>, direction: Direction, source: MetricSource) -> Self {
        Self {
            name: name.into(),
            direction,
            threshold: None,
            source,
        }
    }

    pub fn niqe() -> Self {
        Self::new("niqe", Direction::LowerBetter, MetricSource::InCore)
    }

    pub fn brisque() -> Self {
        Self::new("brisque", Direction::LowerBetter, MetricSource::InCore)
    }

    /// The neural metrics delivered through the scores CSV.
    pub fn external_defaults() -> Vec<Self> {
        ["clipiqa", "maniqa", "musiq"]
            .into_iter()
            .map(|n| Self::new(n, Direction::HigherBetter, MetricSource::External))
            .collect()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    /// Sign applied before standardization.
    pub fn sign(&self) -> f64 {
        match self.direction {
            Direction::HigherBetter => 1.0,
            Direction::LowerBetter => -1.0,
        }
    }

    pub fn passes(&self, value: f64) -> bool {
        match (self.threshold, self.direction) {
            (None, _) => true,
            (Some(t), Direction::HigherBetter) => value >= t,
            (Some(t), Direction::LowerBetter) => value <= t,
        }
    }
}

/// Names unique and non-empty, thresholds finite, at least one metric.
pub fn validate_specs(specs: &[MetricSpec]) -> Result<(), SelectionError> {
    if specs.is_empty() {
        return Err(SelectionError::Spec("no metrics configured".into()));
    }
    let mut seen = HashSet::new();
    for s in specs {
        if s.name.trim().is_empty() || s.name == "crop_id" {
            return Err(SelectionError::Spec(format!(
                "invalid metric name '{}'",
                s.name
            )));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(SelectionError::Spec(format!(
                "metric {} listed twice",
                s.name
            )));
        }
        if s.threshold.is_some_and(|t| !t.is_finite()) {
            return Err(SelectionError::Spec(format!(
                "threshold of {} is not finite",
                s.name
            )));
        }
    }
    Ok(())
}
