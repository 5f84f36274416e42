use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::{CliError, Invocation, Outcome, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run, sufficient to repeat it with `gse rerun`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: Invocation,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub(crate) fn new(
        invocation: Invocation,
        seed: u64,
        out_dir: &Path,
        outcome: Outcome,
        started_at: DateTime<Utc>,
    ) -> Self {
        Self {
            command: invocation.name().to_string(),
            invocation,
            seed,
            inputs: outcome.inputs,
            outputs: outcome.outputs,
            out_dir: out_dir.to_path_buf(),
            version: format!("gse-{}", env!("CARGO_PKG_VERSION")),
            started_at,
            finished_at: Utc::now(),
            summary: outcome.summary,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }
}
