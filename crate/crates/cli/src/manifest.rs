//! Run manifests: every command records what it was asked to do before
//! writing anything else, so partial output trees are attributable.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use keyframe_core::io::write_atomic;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub dataset_path: Option<String>,
    pub output_dir: String,
    pub seed: u64,
    pub tool_version: String,
    /// Unix seconds at invocation. The only field that varies between
    /// reruns of the same invocation.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: Option<&Path>,
        dataset_path: Option<&Path>,
        output_dir: &Path,
        seed: u64,
    ) -> Self {
        Self {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            dataset_path: dataset_path.map(|p| p.display().to_string()),
            output_dir: output_dir.display().to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Creates the output directory and atomically writes the manifest into
/// it, before any artifact.
pub fn write_run_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_atomic(&out_dir.join("run_manifest.json"), &bytes)?;
    Ok(())
}
