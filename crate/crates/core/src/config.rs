//! Run configuration: one JSON document with `search`, `metrics`, `tools`, `mas` and
//! `env` sections. Command-line flags override individual keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amplifier::SearchConfig;
use crate::metrics::MetricId;
use crate::simenv::{SimEnvSpec, SimPolicy};
use crate::topology::TopologyKind;
use crate::Error;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Overrides `search.fitness_metric` when set.
    pub fitness: Option<MetricId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    /// JSON list of tool descriptors.
    pub registry: Option<PathBuf>,
    /// Planner behavior of the agents composites are built from.
    pub policy: SimPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasSection {
    pub kind: TopologyKind,
    pub num: usize,
    /// Defaults to the kind's own round count.
    pub rounds: Option<u32>,
    pub with_tools: bool,
}

impl Default for MasSection {
    fn default() -> Self {
        MasSection { kind: TopologyKind::Chain, num: 4, rounds: None, with_tools: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub search: SearchConfig,
    pub metrics: MetricsSection,
    pub tools: ToolsSection,
    pub mas: MasSection,
    pub env: Option<SimEnvSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        if let Some(m) = config.metrics.fitness {
            config.search.fitness_metric = m;
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
