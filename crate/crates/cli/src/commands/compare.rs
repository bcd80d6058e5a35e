use std::path::PathBuf;

use keyframe_core::io::{read_json, write_json};
use keyframe_core::metrics::write_report_csv;
use keyframe_core::pipeline::{compare, NamedConfig};

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

use super::common::{finish, load_episodes, to_jobs};
use super::run::{load_context, needs_model};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON file: array of {name, config} entries.
    #[arg(long)]
    pub configs: PathBuf,
    /// Trained gap model, shared by configs with gap_source = predicted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset label used in the report.
    #[arg(long, default_value = "dataset")]
    pub label: String,
    /// Output directory (report.csv + report.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-episode rows (episodes.csv).
    #[arg(long)]
    pub per_episode: bool,
}

pub fn run(args: Args, log: Log) -> Result<(), CliError> {
    let configs: Vec<NamedConfig> = read_json(&args.configs)
        .map_err(|e| CliError::Config(format!("configs {}: {e}", args.configs.display())))?;
    if configs.is_empty() {
        return Err(CliError::Config("configs file lists no configurations".into()));
    }
    for nc in &configs {
        nc.config.validate()?;
    }
    let ctx = load_context(args.model.as_ref())?;
    if configs.iter().any(|nc| needs_model(&nc.config)) && ctx.gap_model.is_none() {
        return Err(CliError::Config("a config uses predicted gaps; pass --model".into()));
    }

    let manifest = RunManifest::new(
        "compare",
        Some(&args.configs),
        Some(&args.dataset),
        &args.out,
        configs[0].config.seed,
    );
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, failed) = load_episodes(&args.dataset, log)?;
    if episodes.is_empty() {
        return Err(CliError::Data("no loadable episodes to compare on".into()));
    }
    let jobs = to_jobs(&episodes);

    let report = compare(&configs, &jobs, &ctx, &args.label)?;
    write_report_csv(&args.out.join("report.csv"), &report.report_rows())?;
    if args.per_episode {
        write_report_csv(&args.out.join("episodes.csv"), &report.episode_rows())?;
    }
    write_json(&args.out.join("report.json"), &report)?;

    for agg in &report.aggregate {
        println!(
            "{}: psnr {:.2} dB, ssim {:.4}, index {}, acceleration {:.2}x",
            agg.model,
            agg.mean_psnr_db,
            agg.mean_ssim,
            agg.quality_index
                .map(|q| format!("{q:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            agg.cost.acceleration,
        );
    }
    if report.index_flagged {
        log.warn("quality_index_skipped", fields!(reason = "fewer than two models"));
    }
    log.info(
        "compare_done",
        fields!(models = report.aggregate.len(), episodes = episodes.len(), out = args.out.display()),
    );
    finish(failed, "episode(s)")
}
