use std::path::PathBuf;

use keyframe_core::io::write_json;
use keyframe_core::metrics::BenchmarkOptions;
use keyframe_core::pipeline::{benchmark_pipeline, PipelineConfig, Selection};

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

use super::common::{finish, load_episodes, read_config, to_jobs};
use super::run::{load_context, needs_model};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pipeline config file (JSON). Defaults to motion-aware at density 0.2.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trained gap model (configs with predicted gaps).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Timed passes per episode; the median is kept.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Skip the untimed warm-up pass.
    #[arg(long)]
    pub no_warmup: bool,
    /// Output directory (bench.json).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args, log: Log) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => PipelineConfig::with_density(Selection::MotionAware, 0.2),
    };
    config.validate()?;
    if args.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let ctx = load_context(args.model.as_ref())?;
    if needs_model(&config) && ctx.gap_model.is_none() {
        return Err(CliError::Config("gap_source = predicted requires --model".into()));
    }

    let manifest = RunManifest::new(
        "bench",
        args.config.as_deref(),
        Some(&args.dataset),
        &args.out,
        config.seed,
    );
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, failed) = load_episodes(&args.dataset, log)?;
    if episodes.is_empty() {
        return Err(CliError::Data("no loadable episodes to benchmark".into()));
    }
    let jobs = to_jobs(&episodes);

    let opts = BenchmarkOptions { repeats: args.repeats, warmup: !args.no_warmup };
    let summary = benchmark_pipeline(&config, &jobs, &ctx, &opts)?;
    write_json(&args.out.join("bench.json"), &summary)?;

    let agg = &summary.aggregate;
    println!(
        "keyframe {:.4}s + gap {:.4}s + interp {:.4}s = {:.4}s vs baseline {:.4}s ({:.2}x)",
        agg.keyframe_gen_seconds,
        agg.gap_estimation_seconds,
        agg.interpolation_seconds,
        agg.total_seconds,
        agg.baseline_seconds,
        agg.acceleration,
    );
    log.info(
        "bench_done",
        fields!(
            episodes = summary.per_episode.len(),
            acceleration = format!("{:.3}", agg.acceleration),
            out = args.out.display()
        ),
    );
    finish(failed, "episode(s)")
}
