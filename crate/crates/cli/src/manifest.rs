//! Run manifests: a JSON record written beside every output so any artifact
//! can be re-derived from its inputs, seed, and tool version.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-column standard deviations applied by `fit --standardize`; later
    /// inputs must be divided by these to match the model's scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column_sds: Option<Vec<f64>>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[&Path], outputs: &[&Path]) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: None,
            seed: None,
            column_sds: None,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> RunManifest {
        self.seed = Some(seed);
        self
    }

    pub fn with_config(mut self, path: &Path) -> RunManifest {
        self.config = Some(path.display().to_string());
        self
    }

    /// Write `<primary output>.manifest.json` next to the primary output.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf, CliError> {
        let path = PathBuf::from(format!("{}.manifest.json", primary.display()));
        let body = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        std::fs::write(&path, body + "\n")
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
