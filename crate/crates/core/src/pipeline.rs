//! End-to-end orchestration: keyframe selection → generation → gap
//! estimation → reconstruction, plus controlled comparisons between
//! keyframe arrangements (motion-aware, uniform, frame-to-frame).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Episode, Frame, KeyFrameSet, PoseState, Trajectory};
use crate::exec;
use crate::gapnet::{default_g_max, normalize_gaps, predict_gap, GapEstimator, Obs};
use crate::generator::{generate_keyframes, KeyFrameGenerator};
use crate::interp::{reconstruct_poses, reconstruct_video, Interpolator};
use crate::metrics::{
    benchmark_episodes, pose_rmse, psnr_video, quality_index, ssim_video, time_seconds,
    trajectory_complexity, BenchmarkOptions, BenchmarkSummary, CostReport, PsnrDb, QualityRow,
    ReportRow, StageSeconds,
};
use crate::simplify::{select_keyframes_by_count, SimplifyParams};
use crate::synthworld::{simulate_task, ArmSpec, TaskScript};

/// Pipeline stage for error attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Selection,
    KeyframeGeneration,
    GapEstimation,
    Interpolation,
    Simulation,
    Metrics,
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StageName::Selection => "selection",
            StageName::KeyframeGeneration => "keyframe generation",
            StageName::GapEstimation => "gap estimation",
            StageName::Interpolation => "interpolation",
            StageName::Simulation => "simulation",
            StageName::Metrics => "metrics",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    BadConfig(String),
    #[error("episode {episode}, {stage} stage: {message}")]
    Stage {
        episode: String,
        stage: StageName,
        message: String,
    },
}

fn stage_err(episode: &str, stage: StageName) -> impl FnOnce(Box<dyn fmt::Display>) -> PipelineError + '_ {
    move |e| PipelineError::Stage {
        episode: episode.to_string(),
        stage,
        message: e.to_string(),
    }
}

macro_rules! at_stage {
    ($expr:expr, $episode:expr, $stage:expr) => {
        $expr.map_err(|e| stage_err($episode, $stage)(Box::new(e)))
    };
}

/// How keyframe indices are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Deviation-driven placement on the pose trajectory.
    MotionAware,
    /// Evenly spaced indices, same count.
    Uniform,
}

/// Where the per-pair gaps come from at reconstruction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSource {
    /// Regress gaps from keyframe embeddings, then normalize to tile the
    /// episode exactly.
    Predicted,
    /// Index differences minus one.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolatorKind {
    PixelLinear,
    PoseRerender,
}

/// Full configuration of one reconstruction arm. Exactly one of
/// `keyframe_density` (fraction of frames kept, in (0, 1]) and
/// `keyframe_count` must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframe_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframe_count: Option<usize>,
    pub selection: Selection,
    pub generator: KeyFrameGenerator,
    pub gap_source: GapSource,
    pub interpolator: InterpolatorKind,
    /// Run-level seed, recorded in manifests; per-frame noise seeding
    /// lives on the generator.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn with_density(selection: Selection, density: f64) -> Self {
        Self {
            keyframe_density: Some(density),
            keyframe_count: None,
            selection,
            generator: KeyFrameGenerator::oracle(),
            gap_source: GapSource::GroundTruth,
            interpolator: InterpolatorKind::PixelLinear,
            seed: 0,
        }
    }

    pub fn with_count(selection: Selection, count: usize) -> Self {
        Self {
            keyframe_density: None,
            keyframe_count: Some(count),
            ..Self::with_density(selection, 1.0)
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        match (self.keyframe_density, self.keyframe_count) {
            (Some(d), None) => {
                if !(d > 0.0 && d <= 1.0) {
                    return Err(PipelineError::BadConfig(format!(
                        "keyframe_density {d} outside (0, 1]"
                    )));
                }
            }
            (None, Some(c)) => {
                if c < 2 {
                    return Err(PipelineError::BadConfig(format!(
                        "keyframe_count {c} below 2"
                    )));
                }
            }
            _ => {
                return Err(PipelineError::BadConfig(
                    "set exactly one of keyframe_density / keyframe_count".into(),
                ))
            }
        }
        self.generator
            .validate()
            .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
        Ok(())
    }

    /// Target |K| on an episode of `n_frames` frames: ⌈density·(N+1)⌉
    /// capped at N+1, or the explicit count. A density that asks for
    /// fewer than 2 frames is a config error, not a silent clamp.
    pub fn target_count(&self, n_frames: usize) -> Result<usize, PipelineError> {
        let target = match (self.keyframe_density, self.keyframe_count) {
            (Some(d), None) => {
                let raw = d * n_frames as f64;
                if raw < 2.0 {
                    return Err(PipelineError::BadConfig(format!(
                        "density {d} keeps fewer than 2 of {n_frames} frames"
                    )));
                }
                (raw.ceil() as usize).min(n_frames)
            }
            (None, Some(c)) => c,
            _ => return Err(PipelineError::BadConfig("ambiguous keyframe budget".into())),
        };
        if target > n_frames {
            return Err(PipelineError::BadConfig(format!(
                "keyframe target {target} exceeds episode length {n_frames}"
            )));
        }
        Ok(target)
    }
}

/// Evenly spaced keyframe indices including both endpoints: index j maps
/// to round(j·N/(K−1)). With a step of at least one index the rounded
/// positions are strictly increasing, so the set is always valid.
pub fn uniform_indices(n_frames: usize, count: usize) -> Result<KeyFrameSet, PipelineError> {
    if n_frames < 2 || count < 2 || count > n_frames {
        return Err(PipelineError::BadConfig(format!(
            "uniform selection needs 2 ≤ count ≤ frames, got count {count} on {n_frames} frames"
        )));
    }
    let n = (n_frames - 1) as f64;
    let indices = (0..count)
        .map(|j| (j as f64 * n / (count - 1) as f64).round() as usize)
        .collect();
    Ok(KeyFrameSet::new(indices, 0.0, n_frames))
}

/// Places keyframe indices per the config: motion-aware runs the
/// count-targeted trajectory simplification; uniform spaces indices
/// evenly. Motion-aware may land near, not on, the target when the
/// deviation structure cannot express it.
pub fn select_indices(
    config: &PipelineConfig,
    episode: &Episode,
) -> Result<KeyFrameSet, PipelineError> {
    config.validate()?;
    let target = config.target_count(episode.len())?;
    match config.selection {
        Selection::MotionAware => {
            let selection = at_stage!(
                select_keyframes_by_count(
                    &episode.trajectory,
                    target,
                    &SimplifyParams::with_epsilon(0.0)
                ),
                &episode.id,
                StageName::Selection
            )?;
            Ok(selection.keys)
        }
        Selection::Uniform => uniform_indices(episode.len(), target),
    }
}

/// Everything run_episode produces besides the baseline measurement.
struct StagedRun {
    video: Vec<Frame>,
    stages: StageSeconds,
    keys: KeyFrameSet,
    gaps: Vec<usize>,
}

/// Shared, episode-independent inputs: the arm geometry for re-rendering
/// and the trained gap model for predicted gaps.
#[derive(Debug, Clone, Default)]
pub struct PipelineContext {
    pub spec: ArmSpec,
    pub gap_model: Option<GapEstimator>,
}

/// One episode plus the task script it was simulated from (needed only
/// for pose re-rendering).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeJob {
    pub episode: Episode,
    pub script: Option<TaskScript>,
}

impl EpisodeJob {
    pub fn new(episode: Episode) -> Self {
        Self { episode, script: None }
    }

    pub fn with_script(episode: Episode, script: TaskScript) -> Self {
        Self { episode, script: Some(script) }
    }
}

/// Simulates every script into an episode job, in parallel.
pub fn simulate_jobs(
    scripts: &[TaskScript],
    spec: &ArmSpec,
    fps: f64,
    seed: u64,
) -> Result<Vec<EpisodeJob>, PipelineError> {
    exec::par_map(scripts.to_vec(), |script| {
        let episode = at_stage!(
            simulate_task(&script, spec, fps, seed),
            &script.name,
            StageName::Simulation
        )?;
        Ok(EpisodeJob::with_script(episode, script))
    })
    .into_iter()
    .collect()
}

fn run_stages(
    config: &PipelineConfig,
    episode: &Episode,
    script: Option<&TaskScript>,
    ctx: &PipelineContext,
) -> Result<StagedRun, PipelineError> {
    let id = episode.id.as_str();

    // Stage 1: index selection + keyframe generation.
    let ((keys, keyframes), keyframe_gen) = {
        let (res, secs) = time_seconds(|| -> Result<_, PipelineError> {
            let keys = select_indices(config, episode)?;
            let frames = at_stage!(
                generate_keyframes(&config.generator, episode, &keys),
                id,
                StageName::KeyframeGeneration
            )?;
            Ok((keys, frames))
        });
        (res?, secs)
    };
    let key_poses: Vec<PoseState> = keys
        .indices
        .iter()
        .map(|&i| episode.trajectory.states[i].clone())
        .collect();

    // Stage 2: gaps. Uniform placement implies the gaps, so prediction is
    // skipped there even when a model is configured.
    let (gaps, gap_estimation) = {
        let (res, secs) = time_seconds(|| -> Result<Vec<usize>, PipelineError> {
            let predict = config.gap_source == GapSource::Predicted
                && config.selection == Selection::MotionAware;
            if !predict {
                return Ok(keys.true_gaps());
            }
            let model = ctx.gap_model.as_ref().ok_or_else(|| {
                PipelineError::BadConfig("gap_source = predicted requires a gap model".into())
            })?;
            let mut raw = Vec::with_capacity(keys.len() - 1);
            for (pair_f, pair_p) in keyframes.windows(2).zip(key_poses.windows(2)) {
                let g = at_stage!(
                    predict_gap(
                        model,
                        Obs::both(&pair_f[0], &pair_p[0]),
                        Obs::both(&pair_f[1], &pair_p[1])
                    ),
                    id,
                    StageName::GapEstimation
                )?;
                raw.push(g);
            }
            let n = episode.last_index();
            let normalized = at_stage!(
                normalize_gaps(&raw, n, default_g_max(n, keys.len())),
                id,
                StageName::GapEstimation
            )?;
            Ok(normalized.gaps)
        });
        (res?, secs)
    };

    // Stage 3: reconstruction.
    let (video, interpolation) = {
        let (res, secs) = time_seconds(|| -> Result<Vec<Frame>, PipelineError> {
            let interp = match config.interpolator {
                InterpolatorKind::PixelLinear => Interpolator::PixelLinear,
                InterpolatorKind::PoseRerender => {
                    let script = script.ok_or_else(|| {
                        PipelineError::BadConfig(
                            "pose_rerender requires the episode's task script".into(),
                        )
                    })?;
                    Interpolator::PoseRerender {
                        spec: ctx.spec.clone(),
                        script: script.clone(),
                    }
                }
            };
            at_stage!(
                reconstruct_video(&keyframes, &gaps, &interp, Some(&key_poses)),
                id,
                StageName::Interpolation
            )
        });
        (res?, secs)
    };
    debug_assert_eq!(video.len(), episode.len());

    Ok(StagedRun {
        video,
        stages: StageSeconds { keyframe_gen, gap_estimation, interpolation },
        keys,
        gaps,
    })
}

/// Result of one reconstruction pass over one episode.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub video: Vec<Frame>,
    pub cost: CostReport,
    pub keys: KeyFrameSet,
    pub gaps: Vec<usize>,
}

/// Runs the staged pipeline on one episode and measures a frame-by-frame
/// baseline pass (the same generator asked for every index) for the cost
/// report.
pub fn run_episode(
    config: &PipelineConfig,
    episode: &Episode,
    script: Option<&TaskScript>,
    ctx: &PipelineContext,
) -> Result<EpisodeRun, PipelineError> {
    let staged = run_stages(config, episode, script, ctx)?;
    let baseline = measure_baseline(config, episode)?;
    Ok(EpisodeRun {
        video: staged.video,
        cost: CostReport::from_stages(
            staged.stages.keyframe_gen,
            staged.stages.gap_estimation,
            staged.stages.interpolation,
            baseline,
        ),
        keys: staged.keys,
        gaps: staged.gaps,
    })
}

/// Times the degenerate frame-to-frame pass: every index is a keyframe,
/// nothing is interpolated.
fn measure_baseline(config: &PipelineConfig, episode: &Episode) -> Result<f64, PipelineError> {
    let all = KeyFrameSet::new((0..episode.len()).collect(), 0.0, episode.len());
    let (res, secs) = time_seconds(|| generate_keyframes(&config.generator, episode, &all));
    at_stage!(res, &episode.id, StageName::KeyframeGeneration)?;
    Ok(secs)
}

/// A labeled configuration in a comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub config: PipelineConfig,
}

impl NamedConfig {
    pub fn new(name: impl Into<String>, config: PipelineConfig) -> Self {
        Self { name: name.into(), config }
    }
}

/// Per-episode, per-model evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode_id: String,
    pub model: String,
    pub psnr: PsnrDb,
    pub ssim: f64,
    /// Cumulative pose motion of the ground-truth episode.
    pub complexity: f64,
    /// RMSE between the interpolated pose sequence and the true
    /// trajectory; depends only on index placement and gaps.
    pub pose_rmse: f64,
    pub achieved_keys: usize,
    pub cost: CostReport,
}

/// One model's means over the dataset. PSNR is capped before averaging so
/// exact reconstructions don't swallow the column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: String,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_complexity: f64,
    pub mean_pose_rmse: f64,
    pub mean_keys: f64,
    /// None when fewer than two models were compared.
    pub quality_index: Option<f64>,
    /// Stage means; acceleration of the means.
    pub cost: CostReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset: String,
    pub outcomes: Vec<EpisodeOutcome>,
    pub aggregate: Vec<ModelAggregate>,
    /// Set when the quality index could not be computed (single model).
    pub index_flagged: bool,
}

impl ComparisonReport {
    /// Aggregate rows in the canonical report-CSV shape, one per model.
    pub fn report_rows(&self) -> Vec<ReportRow> {
        self.aggregate
            .iter()
            .map(|a| ReportRow {
                dataset: self.dataset.clone(),
                model: a.model.clone(),
                psnr_db: PsnrDb(a.mean_psnr_db),
                ssim: a.mean_ssim,
                complexity: a.mean_complexity,
                quality_index: a.quality_index,
                keygen_s: a.cost.keyframe_gen_seconds,
                gap_s: a.cost.gap_estimation_seconds,
                interp_s: a.cost.interpolation_seconds,
                total_s: a.cost.total_seconds,
                acceleration: a.cost.acceleration,
            })
            .collect()
    }

    /// Per-episode rows in the same shape; the dataset column carries the
    /// episode id.
    pub fn episode_rows(&self) -> Vec<ReportRow> {
        self.outcomes
            .iter()
            .map(|o| ReportRow {
                dataset: o.episode_id.clone(),
                model: o.model.clone(),
                psnr_db: o.psnr,
                ssim: o.ssim,
                complexity: o.complexity,
                quality_index: None,
                keygen_s: o.cost.keyframe_gen_seconds,
                gap_s: o.cost.gap_estimation_seconds,
                interp_s: o.cost.interpolation_seconds,
                total_s: o.cost.total_seconds,
                acceleration: o.cost.acceleration,
            })
            .collect()
    }
}

/// Key identifying a keyframe budget so motion-aware and uniform arms at
/// the same budget can be paired.
fn budget_key(config: &PipelineConfig) -> String {
    match (config.keyframe_density, config.keyframe_count) {
        (Some(d), _) => format!("d:{:016x}", d.to_bits()),
        (_, Some(c)) => format!("c:{c}"),
        _ => "none".into(),
    }
}

/// Runs every config over every episode and aggregates metrics per model.
///
/// Configs run in order within an episode: when a uniform arm shares a
/// budget with an earlier motion-aware arm, it adopts that arm's achieved
/// count on the episode, keeping |K| identical across the pair even when
/// the bisection could not hit the target exactly. Episodes are processed
/// in parallel; outcome order is (episode, config), independent of the
/// worker count.
pub fn compare(
    configs: &[NamedConfig],
    jobs: &[EpisodeJob],
    ctx: &PipelineContext,
    dataset: &str,
) -> Result<ComparisonReport, PipelineError> {
    if configs.is_empty() {
        return Err(PipelineError::BadConfig("compare needs at least one config".into()));
    }
    for nc in configs {
        nc.config.validate()?;
    }

    let per_episode: Vec<Result<Vec<EpisodeOutcome>, PipelineError>> =
        exec::par_map(jobs.iter().collect(), |job| {
            let episode = &job.episode;
            let truth = &episode.frames;
            let complexity = trajectory_complexity(&episode.trajectory);
            let mut achieved: BTreeMap<String, usize> = BTreeMap::new();
            let mut outcomes = Vec::with_capacity(configs.len());
            for nc in configs {
                let mut config = nc.config.clone();
                if config.selection == Selection::Uniform {
                    if let Some(&k) = achieved.get(&budget_key(&config)) {
                        config.keyframe_density = None;
                        config.keyframe_count = Some(k);
                    }
                }
                let run = run_episode(&config, episode, job.script.as_ref(), ctx)?;
                if nc.config.selection == Selection::MotionAware {
                    achieved
                        .entry(budget_key(&nc.config))
                        .or_insert(run.keys.len());
                }

                let psnr = at_stage!(psnr_video(&run.video, truth), &episode.id, StageName::Metrics)?;
                let ssim = at_stage!(ssim_video(&run.video, truth), &episode.id, StageName::Metrics)?;
                let key_poses: Vec<PoseState> = run
                    .keys
                    .indices
                    .iter()
                    .map(|&i| episode.trajectory.states[i].clone())
                    .collect();
                let recon = Trajectory::from_states(
                    reconstruct_poses(&key_poses, &run.gaps),
                    episode.fps,
                );
                let rmse = at_stage!(
                    pose_rmse(&recon, &episode.trajectory),
                    &episode.id,
                    StageName::Metrics
                )?;
                outcomes.push(EpisodeOutcome {
                    episode_id: episode.id.clone(),
                    model: nc.name.clone(),
                    psnr,
                    ssim,
                    complexity,
                    pose_rmse: rmse,
                    achieved_keys: run.keys.len(),
                    cost: run.cost,
                });
            }
            Ok(outcomes)
        });

    let mut outcomes = Vec::with_capacity(jobs.len() * configs.len());
    for res in per_episode {
        outcomes.extend(res?);
    }

    let n = jobs.len().max(1) as f64;
    let mut aggregate = Vec::with_capacity(configs.len());
    for nc in configs {
        let rows: Vec<&EpisodeOutcome> =
            outcomes.iter().filter(|o| o.model == nc.name).collect();
        let mean = |f: &dyn Fn(&EpisodeOutcome) -> f64| -> f64 {
            rows.iter().map(|o| f(o)).sum::<f64>() / n
        };
        aggregate.push(ModelAggregate {
            model: nc.name.clone(),
            mean_psnr_db: mean(&|o| o.psnr.capped()),
            mean_ssim: mean(&|o| o.ssim),
            mean_complexity: mean(&|o| o.complexity),
            mean_pose_rmse: mean(&|o| o.pose_rmse),
            mean_keys: mean(&|o| o.achieved_keys as f64),
            quality_index: None,
            cost: CostReport::from_stages(
                mean(&|o| o.cost.keyframe_gen_seconds),
                mean(&|o| o.cost.gap_estimation_seconds),
                mean(&|o| o.cost.interpolation_seconds),
                mean(&|o| o.cost.baseline_seconds),
            ),
        });
    }

    let index_flagged = aggregate.len() < 2;
    if !index_flagged {
        let rows: Vec<QualityRow> = aggregate
            .iter()
            .map(|a| QualityRow {
                model_name: a.model.clone(),
                dataset_name: dataset.to_string(),
                psnr: PsnrDb(a.mean_psnr_db),
                ssim: a.mean_ssim,
                extra: BTreeMap::new(),
            })
            .collect();
        let scores = at_stage!(quality_index(&rows), dataset, StageName::Metrics)?;
        for (agg, (_, score)) in aggregate.iter_mut().zip(scores) {
            agg.quality_index = Some(score);
        }
    }

    Ok(ComparisonReport {
        dataset: dataset.to_string(),
        outcomes,
        aggregate,
        index_flagged,
    })
}

/// Benchmarks one config over the jobs with the warm-up/median protocol,
/// timing the staged pass against the frame-to-frame baseline.
pub fn benchmark_pipeline(
    config: &PipelineConfig,
    jobs: &[EpisodeJob],
    ctx: &PipelineContext,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkSummary, PipelineError> {
    config.validate()?;
    let episodes: Vec<Episode> = jobs.iter().map(|j| j.episode.clone()).collect();
    let scripts: BTreeMap<&str, &TaskScript> = jobs
        .iter()
        .filter_map(|j| j.script.as_ref().map(|s| (j.episode.id.as_str(), s)))
        .collect();
    benchmark_episodes(
        &episodes,
        opts,
        |ep| run_stages(config, ep, scripts.get(ep.id.as_str()).copied(), ctx).map(|s| s.stages),
        |ep| measure_baseline(config, ep),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::DEFAULT_FPS;
    use crate::gapnet::{build_pair_dataset, train_gap_estimator, FrameEncoder};
    use crate::synthworld::suites::{self, SuiteKind};

    fn pick_place_jobs(count: usize, frames: usize, seed: u64) -> Vec<EpisodeJob> {
        let scripts = suites::generate(SuiteKind::PickPlace, count, frames, seed).unwrap();
        simulate_jobs(&scripts, &ArmSpec::default(), DEFAULT_FPS, 0).unwrap()
    }

    #[test]
    fn density_budget_uses_ceiling() {
        let cfg = PipelineConfig::with_density(Selection::MotionAware, 0.2);
        assert_eq!(cfg.target_count(81).unwrap(), 17);
        let full = PipelineConfig::with_density(Selection::Uniform, 1.0);
        assert_eq!(full.target_count(81).unwrap(), 81);
    }

    #[test]
    fn bad_budgets_are_config_errors() {
        let mut cfg = PipelineConfig::with_density(Selection::Uniform, 0.01);
        assert!(cfg.target_count(81).is_err()); // 0.81 frames
        cfg.keyframe_count = Some(5);
        assert!(cfg.validate().is_err()); // both set
        cfg.keyframe_density = None;
        cfg.keyframe_count = None;
        assert!(cfg.validate().is_err()); // neither set
        assert!(PipelineConfig::with_count(Selection::Uniform, 1).validate().is_err());
    }

    #[test]
    fn uniform_spacing_is_even() {
        let keys = uniform_indices(81, 5).unwrap();
        assert_eq!(keys.indices, vec![0, 20, 40, 60, 80]);

        let keys = uniform_indices(81, 17).unwrap();
        assert_eq!(keys.len(), 17);
        keys.check().unwrap();
        let spacings: Vec<usize> = keys.indices.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = (spacings.iter().min().unwrap(), spacings.iter().max().unwrap());
        assert!(hi - lo <= 1, "spacings {spacings:?}");

        assert_eq!(uniform_indices(81, 2).unwrap().indices, vec![0, 80]);
        assert_eq!(uniform_indices(5, 5).unwrap().indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn motion_aware_selection_finds_breakpoints() {
        let jobs = pick_place_jobs(1, 61, 11);
        let script = jobs[0].script.as_ref().unwrap();
        let target = script.breakpoints().len();
        let cfg = PipelineConfig::with_count(Selection::MotionAware, target);
        let keys = select_indices(&cfg, &jobs[0].episode).unwrap();
        assert_eq!(keys.indices, script.breakpoints());
    }

    #[test]
    fn oracle_run_reconstructs_bit_exactly() {
        let jobs = pick_place_jobs(2, 49, 3);
        let ctx = PipelineContext::default();
        for job in &jobs {
            let target = job.script.as_ref().unwrap().breakpoints().len();
            let mut cfg = PipelineConfig::with_count(Selection::MotionAware, target);
            cfg.interpolator = InterpolatorKind::PoseRerender;
            let run = run_episode(&cfg, &job.episode, job.script.as_ref(), &ctx).unwrap();
            assert_eq!(run.video, job.episode.frames);
            assert!(run.cost.is_consistent());
        }
    }

    #[test]
    fn frame_to_frame_mode_copies_every_frame() {
        let jobs = pick_place_jobs(1, 33, 9);
        let cfg = PipelineConfig::with_density(Selection::Uniform, 1.0);
        let run = run_episode(&cfg, &jobs[0].episode, None, &PipelineContext::default()).unwrap();
        assert_eq!(run.keys.len(), jobs[0].episode.len());
        assert!(run.gaps.iter().all(|&g| g == 0));
        assert_eq!(run.video, jobs[0].episode.frames);
    }

    #[test]
    fn predicted_gaps_always_tile_the_episode() {
        // Train on constant-velocity pairs, then apply to pick-place
        // episodes the model has never seen: predictions are wrong, the
        // output length must not be.
        let spec = ArmSpec::default();
        let train_scripts = suites::generate(SuiteKind::Cv, 4, 41, 21).unwrap();
        let train_jobs = simulate_jobs(&train_scripts, &spec, DEFAULT_FPS, 0).unwrap();
        let mut samples = Vec::new();
        for job in &train_jobs {
            let keys = KeyFrameSet::new(
                job.script.as_ref().unwrap().breakpoints(),
                0.0,
                job.episode.len(),
            );
            samples.extend(build_pair_dataset(&job.episode, &keys).unwrap());
        }
        let model =
            train_gap_estimator(&samples, &FrameEncoder::pose_passthrough(), 1e-6).unwrap();

        let ctx = PipelineContext { spec, gap_model: Some(model) };
        let mut cfg = PipelineConfig::with_density(Selection::MotionAware, 0.2);
        cfg.gap_source = GapSource::Predicted;
        for job in &pick_place_jobs(3, 37, 8) {
            let run = run_episode(&cfg, &job.episode, None, &ctx).unwrap();
            assert_eq!(run.video.len(), job.episode.len());
            assert_eq!(
                run.keys.len() + run.gaps.iter().sum::<usize>(),
                job.episode.len()
            );
        }
    }

    #[test]
    fn predicted_gaps_without_model_is_config_error() {
        let jobs = pick_place_jobs(1, 33, 2);
        let mut cfg = PipelineConfig::with_density(Selection::MotionAware, 0.2);
        cfg.gap_source = GapSource::Predicted;
        let err = run_episode(&cfg, &jobs[0].episode, None, &PipelineContext::default());
        assert!(matches!(err, Err(PipelineError::BadConfig(_))));
    }

    #[test]
    fn compare_ranks_motion_aware_over_uniform_at_equal_count() {
        let jobs = pick_place_jobs(6, 49, 17);
        let ctx = PipelineContext::default();
        // Pick-place scripts have 5 segments, so 6 breakpoints.
        let mut motion = PipelineConfig::with_count(Selection::MotionAware, 6);
        motion.interpolator = InterpolatorKind::PoseRerender;
        let mut uniform = PipelineConfig::with_count(Selection::Uniform, 6);
        uniform.interpolator = InterpolatorKind::PoseRerender;
        let report = compare(
            &[
                NamedConfig::new("motion-aware", motion),
                NamedConfig::new("uniform", uniform),
            ],
            &jobs,
            &ctx,
            "pick-place",
        )
        .unwrap();

        assert!(!report.index_flagged);
        assert_eq!(report.outcomes.len(), jobs.len() * 2);
        for pair in report.outcomes.chunks(2) {
            assert_eq!(pair[0].achieved_keys, pair[1].achieved_keys);
            assert_eq!(pair[0].pose_rmse, 0.0);
            assert_eq!(pair[0].ssim, 1.0);
        }
        let motion_agg = &report.aggregate[0];
        let uniform_agg = &report.aggregate[1];
        assert_eq!(motion_agg.mean_pose_rmse, 0.0);
        assert!(uniform_agg.mean_pose_rmse > 0.0);
        assert!(motion_agg.mean_ssim > uniform_agg.mean_ssim);
        assert_eq!(motion_agg.quality_index, Some(1.0));
        assert_eq!(uniform_agg.quality_index, Some(0.0));
    }

    #[test]
    fn uniform_adopts_achieved_count_when_target_is_unreachable() {
        // A constant pose has zero deviation everywhere, so motion-aware
        // selection can only ever keep the endpoints; the paired uniform
        // arm must drop to the same two keys.
        let n = 24;
        let states = vec![PoseState::new(vec![0.4, -0.2, 0.1, 1.0]); n];
        let episode = Episode {
            id: "flatline".into(),
            description: "hold still".into(),
            frames: vec![Frame::constant(16, 16, 1, 120); n],
            trajectory: Trajectory::from_states(states, DEFAULT_FPS),
            fps: DEFAULT_FPS,
        };
        let jobs = vec![EpisodeJob::new(episode)];
        let report = compare(
            &[
                NamedConfig::new("motion-aware", PipelineConfig::with_count(Selection::MotionAware, 5)),
                NamedConfig::new("uniform", PipelineConfig::with_count(Selection::Uniform, 5)),
            ],
            &jobs,
            &PipelineContext::default(),
            "flatline",
        )
        .unwrap();
        assert_eq!(report.outcomes[0].achieved_keys, 2);
        assert_eq!(report.outcomes[1].achieved_keys, 2);
    }

    #[test]
    fn single_config_comparison_is_flagged() {
        let jobs = pick_place_jobs(2, 33, 4);
        let cfg = PipelineConfig::with_density(Selection::Uniform, 0.3);
        let report = compare(
            &[NamedConfig::new("solo", cfg)],
            &jobs,
            &PipelineContext::default(),
            "pick-place",
        )
        .unwrap();
        assert!(report.index_flagged);
        assert!(report.aggregate[0].quality_index.is_none());
        assert_eq!(report.report_rows().len(), 1);
        assert_eq!(report.episode_rows().len(), 2);
    }

    #[test]
    fn comparison_is_deterministic_excluding_timings() {
        let jobs = pick_place_jobs(3, 41, 29);
        let ctx = PipelineContext::default();
        let configs = [
            NamedConfig::new(
                "motion-aware",
                PipelineConfig {
                    generator: KeyFrameGenerator::noisy_oracle(4.0, 77),
                    ..PipelineConfig::with_density(Selection::MotionAware, 0.25)
                },
            ),
            NamedConfig::new(
                "uniform",
                PipelineConfig {
                    generator: KeyFrameGenerator::noisy_oracle(4.0, 77),
                    ..PipelineConfig::with_density(Selection::Uniform, 0.25)
                },
            ),
        ];
        let a = compare(&configs, &jobs, &ctx, "ds").unwrap();
        let b = compare(&configs, &jobs, &ctx, "ds").unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.episode_id, y.episode_id);
            assert_eq!(x.model, y.model);
            assert_eq!(x.psnr.0.to_bits(), y.psnr.0.to_bits());
            assert_eq!(x.ssim.to_bits(), y.ssim.to_bits());
            assert_eq!(x.pose_rmse.to_bits(), y.pose_rmse.to_bits());
            assert_eq!(x.achieved_keys, y.achieved_keys);
        }
        for (x, y) in a.aggregate.iter().zip(&b.aggregate) {
            assert_eq!(x.quality_index, y.quality_index);
        }
    }

    #[test]
    fn deterministic_videos_across_runs() {
        let jobs = pick_place_jobs(1, 33, 5);
        let cfg = PipelineConfig {
            generator: KeyFrameGenerator::noisy_oracle(6.0, 123),
            ..PipelineConfig::with_density(Selection::MotionAware, 0.3)
        };
        let ctx = PipelineContext::default();
        let a = run_episode(&cfg, &jobs[0].episode, None, &ctx).unwrap();
        let b = run_episode(&cfg, &jobs[0].episode, None, &ctx).unwrap();
        assert_eq!(a.video, b.video);
    }

    #[test]
    fn simulated_cost_acceleration_decreases_with_density() {
        let jobs = pick_place_jobs(1, 33, 13);
        let ctx = PipelineContext::default();
        let opts = BenchmarkOptions { repeats: 1, warmup: false };
        let mut accelerations = Vec::new();
        for density in [0.1, 0.2, 0.4] {
            let cfg = PipelineConfig {
                generator: KeyFrameGenerator::oracle().with_simulated_cost(0.002),
                ..PipelineConfig::with_density(Selection::Uniform, density)
            };
            let summary = benchmark_pipeline(&cfg, &jobs, &ctx, &opts).unwrap();
            accelerations.push(summary.aggregate.acceleration);
        }
        assert!(
            accelerations[0] > accelerations[1] && accelerations[1] > accelerations[2],
            "accelerations {accelerations:?}"
        );
    }

    #[test]
    fn config_json_round_trips() {
        let mut cfg = PipelineConfig::with_density(Selection::MotionAware, 0.2);
        cfg.gap_source = GapSource::Predicted;
        cfg.interpolator = InterpolatorKind::PoseRerender;
        cfg.seed = 42;
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"motion_aware\""));
        assert!(!text.contains("keyframe_count"));
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.keyframe_density, Some(0.2));
        assert_eq!(back.selection, Selection::MotionAware);
        assert_eq!(back.gap_source, GapSource::Predicted);
        assert_eq!(back.interpolator, InterpolatorKind::PoseRerender);
        assert_eq!(back.seed, 42);
    }
}
