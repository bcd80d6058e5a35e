use std::path::PathBuf;

use serde::Serialize;

use keyframe_core::core::validate_episode;
use keyframe_core::exec;
use keyframe_core::io::{write_json, KeyframeRecord};
use keyframe_core::pipeline::{PipelineConfig, Selection};
use keyframe_core::simplify::{select_keyframes_by_count, SimplifyParams};

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

use super::common::{finish, load_episodes, LoadedEpisode};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Fraction of frames to keep, in (0, 1].
    #[arg(long, conflicts_with = "count")]
    pub density: Option<f64>,
    /// Explicit keyframe count per episode.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory for keyframe records and the summary.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip per-dimension standardization before deviation tests.
    #[arg(long)]
    pub raw_deviations: bool,
}

#[derive(Debug, Serialize)]
struct EpisodeExtract {
    id: String,
    keys: usize,
    epsilon: f64,
    achieved: bool,
}

type Extracted = Result<(PathBuf, KeyframeRecord, bool), (String, String)>;

#[derive(Debug, Serialize)]
struct ExtractSummary {
    total: usize,
    extracted: usize,
    failed: usize,
    mean_keys: f64,
    episodes: Vec<EpisodeExtract>,
}

pub fn run(args: Args, log: Log) -> Result<(), CliError> {
    let budget = match (args.density, args.count) {
        (Some(d), None) => PipelineConfig::with_density(Selection::MotionAware, d),
        (None, Some(c)) => PipelineConfig::with_count(Selection::MotionAware, c),
        _ => return Err(CliError::Config("pass exactly one of --density / --count".into())),
    };
    budget.validate()?;

    let manifest = RunManifest::new("extract", None, Some(&args.dataset), &args.out, 0);
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, mut failed) = load_episodes(&args.dataset, log)?;
    let total = episodes.len() + failed;

    let params = SimplifyParams {
        standardize: !args.raw_deviations,
        ..SimplifyParams::with_epsilon(0.0)
    };
    let results: Vec<Extracted> =
        exec::par_map(episodes.iter().collect::<Vec<&LoadedEpisode>>(), |ep| {
            let violations = validate_episode(&ep.episode);
            if let Some(v) = violations.first() {
                return Err((ep.entry.id.clone(), format!("{}: {}", v.field, v.rule)));
            }
            let target = budget
                .target_count(ep.episode.len())
                .map_err(|e| (ep.entry.id.clone(), e.to_string()))?;
            let selection = select_keyframes_by_count(&ep.episode.trajectory, target, &params)
                .map_err(|e| (ep.entry.id.clone(), e.to_string()))?;
            let record = KeyframeRecord {
                episode_id: ep.entry.id.clone(),
                epsilon: selection.keys.epsilon,
                indices: selection.keys.indices.clone(),
                achieved_flag: selection.exact,
            };
            Ok((ep.rel_dir.clone(), record, selection.exact))
        });

    let mut rows = Vec::new();
    let mut key_sum = 0usize;
    for result in results {
        match result {
            Ok((rel_dir, record, achieved)) => {
                let dir = args.out.join(&rel_dir);
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("keyframes.json"), &record)?;
                key_sum += record.indices.len();
                rows.push(EpisodeExtract {
                    id: record.episode_id,
                    keys: record.indices.len(),
                    epsilon: record.epsilon,
                    achieved,
                });
            }
            Err((id, message)) => {
                failed += 1;
                log.warn("extraction_skipped", fields!(id = id, error = message));
            }
        }
    }

    let extracted = rows.len();
    let summary = ExtractSummary {
        total,
        extracted,
        failed,
        mean_keys: if extracted > 0 { key_sum as f64 / extracted as f64 } else { 0.0 },
        episodes: rows,
    };
    write_json(&args.out.join("extract_summary.json"), &summary)?;
    log.info(
        "extraction_done",
        fields!(extracted = extracted, failed = failed, out = args.out.display()),
    );
    finish(failed, "episode(s)")
}
