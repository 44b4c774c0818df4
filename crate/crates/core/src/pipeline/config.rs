use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::annotations::{DatasetOrigin, LabelAliasMap, DEFAULT_MIN_CONFIDENCE};
use crate::degrade::DegradationConfig;
use crate::selection::{
    top_count, validate_specs, HoldoutSpec, MetricSource, MetricSpec, DEFAULT_FRACTION,
};

pub const CONFIG_VERSION: u32 = 1;
/// Metrics computed inside the pipeline.
pub const IN_CORE_METRICS: [&str; 2] = ["niqe", "brisque"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Coco,
    Object365,
    Oid,
    Crowdhuman,
    DetectionImport,
}

impl InputFormat {
    pub fn origin(self) -> DatasetOrigin {
        match self {
            InputFormat::Coco => DatasetOrigin::Coco,
            InputFormat::Object365 => DatasetOrigin::Object365,
            InputFormat::Oid => DatasetOrigin::Oid,
            InputFormat::Crowdhuman => DatasetOrigin::CrowdHuman,
            InputFormat::DetectionImport => DatasetOrigin::DetectionImport,
        }
    }
}

/// One annotation source and the directory holding its images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub format: InputFormat,
    pub annotations: PathBuf,
    pub images: PathBuf,
    /// Image file extension for formats that name images by id.
    #[serde(default = "default_extension")]
    pub extension: String,
    /// Detection import: minimum detector confidence. Open Images: optional
    /// filter on the `Confidence` column.
    #[serde(default)]
    pub min_confidence: Option<f64>,
}

fn default_extension() -> String {
    "jpg".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurScope {
    /// Variance of the whole source image.
    #[default]
    Image,
    /// Variance of each squarified crop region.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnreadablePolicy {
    /// Count the image and continue.
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    /// NIQE model file; the bundled pristine model when unset.
    #[serde(default)]
    pub niqe: Option<PathBuf>,
    #[serde(default)]
    pub brisque_svm: Option<PathBuf>,
    #[serde(default)]
    pub brisque_range: Option<PathBuf>,
}

/// Pipeline configuration (TOML, `version = 1`). Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub aliases: LabelAliasMap,
    #[serde(default = "default_blur")]
    pub blur_variance_threshold: f64,
    #[serde(default)]
    pub blur_scope: BlurScope,
    #[serde(default = "default_min_side")]
    pub min_side: f64,
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricSpec>,
    #[serde(default = "default_fraction")]
    pub selection_fraction: f64,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    #[serde(default = "default_shard")]
    pub shard_size: usize,
    #[serde(default)]
    pub on_unreadable: UnreadablePolicy,
    #[serde(default = "default_crop_size")]
    pub crop_size: usize,
    #[serde(default = "default_crop_format")]
    pub crop_format: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    /// External neural scores (`crop_id,<metric...>`) merged before selection.
    #[serde(default)]
    pub scores_csv: Option<PathBuf>,
    #[serde(default)]
    pub models: ModelPaths,
    #[serde(default)]
    pub degradation: DegradationConfig,
    #[serde(default)]
    pub holdout: HoldoutSpec,
}

fn default_blur() -> f64 {
    100.0
}
fn default_min_side() -> f64 {
    384.0
}
fn default_iou() -> f64 {
    0.45
}
fn default_metrics() -> Vec<MetricSpec> {
    let mut m = vec![MetricSpec::niqe()];
    m.extend(MetricSpec::external_defaults());
    m
}
fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}
fn default_workers() -> usize {
    1
}
fn default_shard() -> usize {
    1000
}
fn default_crop_size() -> usize {
    512
}
fn default_crop_format() -> String {
    "png".into()
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    /// Defaults for everything except the output directory.
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            inputs: Vec::new(),
            aliases: LabelAliasMap::default(),
            blur_variance_threshold: default_blur(),
            blur_scope: BlurScope::Image,
            min_side: default_min_side(),
            iou_threshold: default_iou(),
            metrics: default_metrics(),
            selection_fraction: default_fraction(),
            worker_count: default_workers(),
            shard_size: default_shard(),
            on_unreadable: UnreadablePolicy::Skip,
            crop_size: default_crop_size(),
            crop_format: default_crop_format(),
            output_dir: output_dir.into(),
            checkpoint_dir: None,
            scores_csv: None,
            models: ModelPaths::default(),
            degradation: DegradationConfig::default(),
            holdout: HoldoutSpec::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            PipelineError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for input in &mut self.inputs {
            fix(&mut input.annotations);
            fix(&mut input.images);
        }
        fix(&mut self.output_dir);
        for p in [
            &mut self.checkpoint_dir,
            &mut self.scores_csv,
            &mut self.models.niqe,
            &mut self.models.brisque_svm,
            &mut self.models.brisque_range,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.blur_variance_threshold.is_finite() && self.blur_variance_threshold >= 0.0) {
            return Err(config_err(format!(
                "blur_variance_threshold {} must be non-negative",
                self.blur_variance_threshold
            )));
        }
        if !(self.min_side.is_finite() && self.min_side > 0.0) {
            return Err(config_err(format!(
                "min_side {} must be positive",
                self.min_side
            )));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(config_err(format!(
                "iou_threshold {} outside [0, 1]",
                self.iou_threshold
            )));
        }
        top_count(self.selection_fraction, 0)?;
        if self.worker_count == 0 {
            return Err(config_err("worker_count must be at least 1"));
        }
        if self.shard_size == 0 {
            return Err(config_err("shard_size must be at least 1"));
        }
        if self.crop_size < 16 {
            return Err(config_err(format!(
                "crop_size {} too small",
                self.crop_size
            )));
        }
        if !matches!(self.crop_format.as_str(), "png" | "jpg" | "jpeg") {
            return Err(config_err(format!(
                "crop_format '{}' (use png or jpg)",
                self.crop_format
            )));
        }
        validate_specs(&self.metrics)?;
        for m in &self.metrics {
            if m.source == MetricSource::InCore && !IN_CORE_METRICS.contains(&m.name.as_str()) {
                return Err(config_err(format!(
                    "unknown in-core metric '{}' (available: {})",
                    m.name,
                    IN_CORE_METRICS.join(", ")
                )));
            }
        }
        if self.models.brisque_svm.is_some() != self.models.brisque_range.is_some() {
            return Err(config_err(
                "models.brisque_svm and models.brisque_range go together",
            ));
        }
        for input in &self.inputs {
            if let Some(c) = input.min_confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(config_err(format!("min_confidence {c} outside [0, 1]")));
                }
            }
        }
        self.degradation.validate()?;
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoints"))
    }

    pub fn in_core_metrics(&self) -> Vec<String> {
        self.metrics
            .iter()
            .filter(|m| m.source == MetricSource::InCore)
            .map(|m| m.name.clone())
            .collect()
    }

    pub fn external_metrics(&self) -> Vec<String> {
        self.metrics
            .iter()
            .filter(|m| m.source == MetricSource::External)
            .map(|m| m.name.clone())
            .collect()
    }

    pub fn detection_min_confidence(input: &InputSpec) -> f64 {
        input.min_confidence.unwrap_or(DEFAULT_MIN_CONFIDENCE)
    }

    /// Digest of every setting that shapes checkpointed per-image work.
    /// Selection settings are applied after the barrier and are left out, so
    /// they can change between resumes.
    pub fn hash(&self) -> String {
        let mut in_core = self.in_core_metrics();
        in_core.sort();
        let hashed = serde_json::json!({
            "version": self.version,
            "inputs": self.inputs,
            "aliases": self.aliases,
            "blur_variance_threshold": self.blur_variance_threshold,
            "blur_scope": self.blur_scope,
            "min_side": self.min_side,
            "iou_threshold": self.iou_threshold,
            "in_core_metrics": in_core,
            "shard_size": self.shard_size,
            "on_unreadable": self.on_unreadable,
            "crop_size": self.crop_size,
            "crop_format": self.crop_format,
            "models": self.models,
        });
        let digest = Sha256::digest(serde_json::to_vec(&hashed).expect("serializable"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Input paths must be distinct so image ids stay unique.
    pub(crate) fn check_inputs(&self) -> Result<(), PipelineError> {
        if self.inputs.is_empty() {
            return Err(config_err("no inputs configured"));
        }
        let mut seen = HashSet::new();
        for i in &self.inputs {
            if !seen.insert(&i.annotations) {
                return Err(config_err(format!(
                    "input {} listed twice",
                    i.annotations.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
output_dir = "out"

[[inputs]]
format = "coco"
annotations = "ann/coco.json"
images = "/abs/images"
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.blur_variance_threshold, 100.0);
        assert_eq!(cfg.min_side, 384.0);
        assert_eq!(cfg.iou_threshold, 0.45);
        assert_eq!(cfg.shard_size, 1000);
        assert_eq!(cfg.output_dir, Path::new("/base/out"));
        assert_eq!(cfg.inputs[0].annotations, Path::new("/base/ann/coco.json"));
        assert_eq!(cfg.inputs[0].images, Path::new("/abs/images"));
        assert_eq!(cfg.checkpoint_dir(), Path::new("/base/out/checkpoints"));
        let names: Vec<_> = cfg.metrics.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["niqe", "clipiqa", "maniqa", "musiq"]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (key, val) in [
            ("selection_fraction", "1.5"),
            ("iou_threshold", "-0.1"),
            ("worker_count", "0"),
            ("min_side", "0"),
            ("version", "2"),
            ("crop_format", "\"bmp\""),
        ] {
            let text = if key == "version" {
                MINIMAL.replace("version = 1", "version = 2")
            } else {
                format!("{key} = {val}\n{MINIMAL}")
            };
            let err = PipelineConfig::from_toml(&text, Path::new("/")).unwrap_err();
            assert!(err.is_config(), "{key}: {err}");
        }
        let err = PipelineConfig::from_toml(&format!("bogus = 1\n{MINIMAL}"), Path::new("/"))
            .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn unknown_in_core_metric() {
        let text =
            format!("{MINIMAL}\n[[metrics]]\nname = \"piqe\"\ndirection = \"lower_better\"\n");
        assert!(PipelineConfig::from_toml(&text, Path::new("/"))
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn hash_tracks_gate_settings_only() {
        let a = PipelineConfig::from_toml(MINIMAL, Path::new("/b")).unwrap();
        let mut b = a.clone();
        b.selection_fraction = 0.5;
        b.worker_count = 8;
        assert_eq!(a.hash(), b.hash());
        b.blur_variance_threshold = 90.0;
        assert_ne!(a.hash(), b.hash());
    }
}
