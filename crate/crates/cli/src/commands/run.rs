use std::path::PathBuf;

use serde::Serialize;

use keyframe_core::exec;
use keyframe_core::gapnet::GapEstimator;
use keyframe_core::interp::keyframe_positions;
use keyframe_core::io::{read_json, save_frames, write_json, FrameFormat, ReconstructionSidecar};
use keyframe_core::generator::KeyFrameGenerator;
use keyframe_core::metrics::{psnr_video, ssim_video, CostReport, PsnrDb};
use keyframe_core::pipeline::{
    run_episode, GapSource, PipelineConfig, PipelineContext, Selection,
};
use keyframe_core::synthworld::ArmSpec;

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

use super::common::{
    finish, load_episodes, parse_gap_source, parse_interpolator, parse_selection, read_config,
};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pipeline config file (JSON). Flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "count")]
    pub density: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// motion-aware or uniform.
    #[arg(long)]
    pub selection: Option<String>,
    /// predicted or ground-truth.
    #[arg(long)]
    pub gap_source: Option<String>,
    /// pixel-linear or pose-rerender.
    #[arg(long)]
    pub interpolator: Option<String>,
    /// Gaussian pixel noise on generated keyframes.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Simulated generator cost per keyframe, seconds.
    #[arg(long)]
    pub sim_cost: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trained gap model (required when gap_source = predicted).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the reconstructed frames per episode.
    #[arg(long)]
    pub dump_frames: bool,
    /// Frame file format for --dump-frames: pgm or png.
    #[arg(long, default_value = "pgm")]
    pub format: String,
}

#[derive(Debug, Serialize)]
struct EpisodeResult {
    id: String,
    psnr_db: Option<PsnrDb>,
    ssim: Option<f64>,
    keys: Option<usize>,
    cost: Option<CostReport>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    config: PipelineConfig,
    episodes: Vec<EpisodeResult>,
    failed: usize,
}

/// Builds the effective config: file (or defaults), then flag overrides.
pub fn effective_config(args: &Args) -> Result<PipelineConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => read_config(path)?,
        None => PipelineConfig::with_density(Selection::MotionAware, 0.2),
    };
    if let Some(d) = args.density {
        config.keyframe_density = Some(d);
        config.keyframe_count = None;
    }
    if let Some(c) = args.count {
        config.keyframe_count = Some(c);
        config.keyframe_density = None;
    }
    if let Some(s) = &args.selection {
        config.selection = parse_selection(s)?;
    }
    if let Some(s) = &args.gap_source {
        config.gap_source = parse_gap_source(s)?;
    }
    if let Some(s) = &args.interpolator {
        config.interpolator = parse_interpolator(s)?;
    }
    if let Some(sigma) = args.noise_sigma {
        config.generator = if sigma > 0.0 {
            KeyFrameGenerator::noisy_oracle(sigma, config.generator.seed)
        } else {
            KeyFrameGenerator::oracle()
        };
    }
    if let Some(cost) = args.sim_cost {
        config.generator = config.generator.clone().with_simulated_cost(cost);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// True when the config will actually consult the gap model.
pub fn needs_model(config: &PipelineConfig) -> bool {
    config.gap_source == GapSource::Predicted && config.selection == Selection::MotionAware
}

pub fn load_context(model: Option<&PathBuf>) -> Result<PipelineContext, CliError> {
    let gap_model: Option<GapEstimator> = match model {
        Some(path) => Some(
            read_json(path).map_err(|e| CliError::Config(format!("model {}: {e}", path.display())))?,
        ),
        None => None,
    };
    Ok(PipelineContext { spec: ArmSpec::default(), gap_model })
}

pub fn run(args: Args, log: Log) -> Result<(), CliError> {
    let format = FrameFormat::from_extension(&args.format)
        .ok_or_else(|| CliError::Config(format!("unknown frame format {:?}", args.format)))?;
    let config = effective_config(&args)?;
    let ctx = load_context(args.model.as_ref())?;
    if needs_model(&config) && ctx.gap_model.is_none() {
        return Err(CliError::Config("gap_source = predicted requires --model".into()));
    }

    let manifest = RunManifest::new(
        "run",
        args.config.as_deref(),
        Some(&args.dataset),
        &args.out,
        config.seed,
    );
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, load_failed) = load_episodes(&args.dataset, log)?;
    let mut failed = load_failed;

    let outcomes = exec::par_map(episodes.iter().collect::<Vec<_>>(), |ep| {
        let result = run_episode(&config, &ep.episode, ep.script.as_ref(), &ctx);
        (ep, result)
    });

    let mut rows = Vec::with_capacity(outcomes.len());
    for (ep, result) in outcomes {
        match result {
            Ok(run) => {
                let dir = args.out.join(&ep.rel_dir);
                std::fs::create_dir_all(&dir)?;
                let sidecar = ReconstructionSidecar {
                    keyframe_positions: keyframe_positions(&run.gaps),
                    gaps: run.gaps.clone(),
                    interpolator: match config.interpolator {
                        keyframe_core::pipeline::InterpolatorKind::PixelLinear => "pixel_linear",
                        keyframe_core::pipeline::InterpolatorKind::PoseRerender => "pose_rerender",
                    }
                    .to_string(),
                };
                write_json(&dir.join("sidecar.json"), &sidecar)?;
                let psnr = psnr_video(&run.video, &ep.episode.frames)?;
                let ssim = ssim_video(&run.video, &ep.episode.frames)?;
                write_json(
                    &dir.join("metrics.json"),
                    &serde_json::json!({
                        "psnr_db": psnr,
                        "ssim": ssim,
                        "cost": run.cost,
                    }),
                )?;
                if args.dump_frames {
                    save_frames(&dir.join("frames"), &run.video, format)?;
                }
                rows.push(EpisodeResult {
                    id: ep.entry.id.clone(),
                    psnr_db: Some(psnr),
                    ssim: Some(ssim),
                    keys: Some(run.keys.len()),
                    cost: Some(run.cost),
                    error: None,
                });
            }
            Err(e) => {
                failed += 1;
                log.error("episode_failed", fields!(id = ep.entry.id, error = e));
                rows.push(EpisodeResult {
                    id: ep.entry.id.clone(),
                    psnr_db: None,
                    ssim: None,
                    keys: None,
                    cost: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let summary = RunSummary { config, episodes: rows, failed };
    write_json(&args.out.join("run_summary.json"), &summary)?;
    log.info(
        "run_done",
        fields!(episodes = summary.episodes.len(), failed = failed, out = args.out.display()),
    );
    finish(failed, "episode(s)")
}
