use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything needed to re-run a command: the full argument set (with the
/// seed filled in), the tool version and when it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub rng_seed: Option<u64>,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<A: Serialize>(command: &str, args: &A, rng_seed: Option<u64>, outputs: Vec<PathBuf>) -> Self {
        Self {
            command: command.to_string(),
            args: serde_json::to_value(args).expect("arguments serialize to JSON"),
            rng_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Writes the manifest next to `out` and returns its path.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes to JSON");
        write_file(&path, &text)?;
        Ok(path)
    }
}

/// `run.csv` → `run.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("a/run.csv")),
            PathBuf::from("a/run.manifest.json")
        );
        assert_eq!(manifest_path(Path::new("run")), PathBuf::from("run.manifest.json"));
    }
}
