//! Run manifests. A manifest carries everything a command read, so
//! `storyplan rerun` can regenerate the same bytes without the original
//! files or flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use storyplan::inference::SpaceMode;
use storyplan::objectives::EvalConfig;
use storyplan::optimizer::SearchConfig;
use storyplan::planner::PlannerConfig;
use storyplan::world::RewardParams;

use crate::RhoClass;

pub const TOOL: &str = "storyplan";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    /// Builtin name or the path it was read from; informational only.
    pub name: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CommandSpec {
    Optimize {
        objective: ObjectiveSpec,
        search: SearchConfig,
    },
    Naive {
        rho: RhoClass,
        seed: u64,
        steps: usize,
    },
    Infer {
        script: serde_json::Value,
    },
    Render {
        script: serde_json::Value,
    },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Optimize { .. } => "optimize",
            CommandSpec::Naive { .. } => "naive",
            CommandSpec::Infer { .. } => "infer",
            CommandSpec::Render { .. } => "render",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    /// What `--layout` named: `kitchen` or a file path.
    pub name: String,
    pub text: String,
    pub hash: String,
}

/// Settings that determine the policy cache and every belief update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub reward: RewardParams,
    pub planner: PlannerConfig,
    pub hypotheses: SpaceMode,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: CommandSpec,
    pub layout: LayoutSpec,
    pub model: ModelSpec,
    pub cache_hash: String,
    /// SHA-256 of each written artifact, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub elapsed_ms: u64,
    /// Command-specific results such as the score or the sampled hypothesis.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifests serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
