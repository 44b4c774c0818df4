use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

/// Counts at each step of the funnel, plus rejection reasons and timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelStats {
    pub collected: usize,
    pub person_labeled: usize,
    pub passed_blur_gate: usize,
    /// Boxes in images that passed the blur gate.
    pub boxes_total: usize,
    pub boxes_after_size_gate: usize,
    pub crops_after_nms: usize,
    pub scored: usize,
    pub top_fraction: usize,
    pub selected: usize,
    pub unreadable_images: usize,
    #[serde(default)]
    pub rejections: BTreeMap<String, usize>,
    #[serde(default)]
    pub stage_seconds: BTreeMap<String, f64>,
}

impl FunnelStats {
    pub fn counts(&self) -> [(&'static str, usize); 9] {
        [
            ("collected", self.collected),
            ("person_labeled", self.person_labeled),
            ("passed_blur_gate", self.passed_blur_gate),
            ("boxes_total", self.boxes_total),
            ("boxes_after_size_gate", self.boxes_after_size_gate),
            ("crops_after_nms", self.crops_after_nms),
            ("scored", self.scored),
            ("top_fraction", self.top_fraction),
            ("selected", self.selected),
        ]
    }

    /// Plain-text funnel table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>10}", "stage", "count");
        for (name, n) in self.counts() {
            let _ = writeln!(s, "{name:<24}{n:>10}");
        }
        let _ = writeln!(
            s,
            "{:<24}{:>10}",
            "unreadable_images", self.unreadable_images
        );
        if !self.rejections.is_empty() {
            let _ = writeln!(s, "\n{:<24}{:>10}", "rejection", "crops");
            for (k, n) in &self.rejections {
                let _ = writeln!(s, "{k:<24}{n:>10}");
            }
        }
        if !self.stage_seconds.is_empty() {
            let _ = writeln!(s, "\n{:<24}{:>10}", "stage", "seconds");
            for (k, t) in &self.stage_seconds {
                let _ = writeln!(s, "{k:<24}{t:>10.2}");
            }
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        serde_json::from_str(&text).map_err(PipelineError::json(path))
    }

    /// Previous stats if present, else empty.
    pub fn load_or_default(path: &Path) -> Result<Self, PipelineError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("serializable") + "\n";
        let path = dir.join(super::files::STATS);
        std::fs::write(&path, json).map_err(PipelineError::io(&path))?;
        let path = dir.join(super::files::FUNNEL);
        std::fs::write(&path, self.table()).map_err(PipelineError::io(&path))
    }
}
