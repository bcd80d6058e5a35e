//! Helpers shared by the subcommands: dataset loading with per-episode
//! fault tolerance and flag parsing.

use std::path::{Path, PathBuf};

use keyframe_core::core::Episode;
use keyframe_core::io::{load_dataset, read_json, DatasetEntry};
use keyframe_core::pipeline::{
    EpisodeJob, GapSource, InterpolatorKind, PipelineConfig, Selection,
};
use keyframe_core::synthworld::TaskScript;

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;

/// A dataset entry that loaded cleanly, with the directory it lives in
/// (relative to the dataset root) and the task script when one was
/// written alongside it.
pub struct LoadedEpisode {
    pub entry: DatasetEntry,
    pub rel_dir: PathBuf,
    pub episode: Episode,
    pub script: Option<TaskScript>,
}

/// Accepts either a dataset directory or a direct path to its index file.
pub fn resolve_index(dataset: &Path) -> PathBuf {
    if dataset.is_dir() {
        dataset.join("index.json")
    } else {
        dataset.to_path_buf()
    }
}

/// Loads every episode in the index; failures are logged and counted, not
/// fatal. Returns `(loaded, failed)`.
pub fn load_episodes(dataset: &Path, log: Log) -> Result<(Vec<LoadedEpisode>, usize), CliError> {
    let index_path = resolve_index(dataset);
    let base = index_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let mut loaded = Vec::new();
    let mut failed = 0usize;
    for (entry, result) in load_dataset(&index_path)? {
        match result {
            Ok(episode) => {
                let rel_dir = Path::new(&entry.manifest)
                    .parent()
                    .unwrap_or_else(|| Path::new(""))
                    .to_path_buf();
                let scene = base.join(&rel_dir).join("scene.json");
                let script = if scene.exists() {
                    match read_json::<TaskScript>(&scene) {
                        Ok(s) => Some(s),
                        Err(e) => {
                            log.warn("scene_unreadable", fields!(id = entry.id, error = e));
                            None
                        }
                    }
                } else {
                    None
                };
                loaded.push(LoadedEpisode { entry, rel_dir, episode, script });
            }
            Err(e) => {
                failed += 1;
                log.warn("episode_load_failed", fields!(id = entry.id, error = e));
            }
        }
    }
    Ok((loaded, failed))
}

pub fn to_jobs(episodes: &[LoadedEpisode]) -> Vec<EpisodeJob> {
    episodes
        .iter()
        .map(|l| EpisodeJob { episode: l.episode.clone(), script: l.script.clone() })
        .collect()
}

/// Turns a skipped-episode count into the final exit status: any data
/// failure makes the whole command a partial failure.
pub fn finish(failed: usize, what: &str) -> Result<(), CliError> {
    if failed > 0 {
        Err(CliError::Data(format!("{failed} {what} failed")))
    } else {
        Ok(())
    }
}

pub fn parse_selection(s: &str) -> Result<Selection, CliError> {
    match s {
        "motion-aware" | "motion_aware" => Ok(Selection::MotionAware),
        "uniform" => Ok(Selection::Uniform),
        other => Err(CliError::Config(format!(
            "unknown selection {other:?} (expected motion-aware or uniform)"
        ))),
    }
}

pub fn parse_gap_source(s: &str) -> Result<GapSource, CliError> {
    match s {
        "predicted" => Ok(GapSource::Predicted),
        "ground-truth" | "ground_truth" => Ok(GapSource::GroundTruth),
        other => Err(CliError::Config(format!(
            "unknown gap source {other:?} (expected predicted or ground-truth)"
        ))),
    }
}

pub fn parse_interpolator(s: &str) -> Result<InterpolatorKind, CliError> {
    match s {
        "pixel-linear" | "pixel_linear" => Ok(InterpolatorKind::PixelLinear),
        "pose-rerender" | "pose_rerender" => Ok(InterpolatorKind::PoseRerender),
        other => Err(CliError::Config(format!(
            "unknown interpolator {other:?} (expected pixel-linear or pose-rerender)"
        ))),
    }
}

/// Reads a pipeline config file, reporting parse problems as usage errors.
pub fn read_config(path: &Path) -> Result<PipelineConfig, CliError> {
    read_json(path).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}
