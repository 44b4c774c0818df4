use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Label names (human readable or machine ids) treated as "person".
///
/// Lookups trim whitespace and ignore case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "AliasSpec", into = "AliasSpec")]
pub struct LabelAliasMap {
    canonical: String,
    aliases: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct AliasSpec {
    canonical: String,
    aliases: Vec<String>,
}

impl From<AliasSpec> for LabelAliasMap {
    fn from(spec: AliasSpec) -> Self {
        LabelAliasMap::new(spec.canonical, spec.aliases)
    }
}

impl From<LabelAliasMap> for AliasSpec {
    fn from(map: LabelAliasMap) -> Self {
        AliasSpec {
            canonical: map.canonical,
            aliases: map.aliases.into_iter().collect(),
        }
    }
}

fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}

impl LabelAliasMap {
    pub fn new<I, S>(canonical: impl Into<String>, aliases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            canonical: canonical.into(),
            aliases: aliases.into_iter().map(|s| normalize(s.as_ref())).collect(),
        }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn contains(&self, label: &str) -> bool {
        self.aliases.contains(&normalize(label))
    }

    pub fn aliases(&self) -> impl Iterator<Item = &str> {
        self.aliases.iter().map(String::as_str)
    }
}

impl Default for LabelAliasMap {
    /// COCO / Object365 / CrowdHuman "person", Open Images "Person" and
    /// "Human body" with their machine ids.
    fn default() -> Self {
        LabelAliasMap::new(
            "person",
            ["person", "human", "human body", "/m/01g317", "/m/02p0tk3"],
        )
    }
}
