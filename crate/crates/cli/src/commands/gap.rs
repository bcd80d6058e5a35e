use std::path::{Path, PathBuf};

use serde::Serialize;

use keyframe_core::core::{mix_seed, KeyFrameSet};
use keyframe_core::gapnet::{
    build_pair_dataset, gap_rmse, predict_gap, train_gap_estimator, train_gap_estimator_mlp,
    FrameEncoder, GapEstimator, MlpOptions, Obs, PairSample, TrainingSummary,
};
use keyframe_core::io::{read_json, write_json, KeyframeRecord};
use keyframe_core::metrics::reference;

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

use super::common::{finish, load_episodes, LoadedEpisode};

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding the extracted keyframes.json tree (an extract
    /// --out directory).
    #[arg(long)]
    pub keyframes: PathBuf,
    /// Encoder: pose or pixel.
    #[arg(long, default_value = "pose")]
    pub encoder: String,
    /// Pooling grid edge for the pixel encoder.
    #[arg(long, default_value_t = 8)]
    pub pool_grid: usize,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    /// Regression head: linear or mlp.
    #[arg(long, default_value = "linear")]
    pub head: String,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    /// Episode-level split seed.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Fraction of episodes held out for evaluation.
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
    /// Output directory (model.json + train_summary.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    encoder: String,
    head: String,
    lambda: f64,
    train_episodes: usize,
    eval_episodes: usize,
    train_pairs: usize,
    eval_pairs: usize,
    holdout_rmse_frames: Option<f64>,
    training: TrainingSummary,
}

fn parse_encoder(name: &str, pool_grid: usize) -> Result<FrameEncoder, CliError> {
    match name {
        "pose" => Ok(FrameEncoder::pose_passthrough()),
        "pixel" => Ok(FrameEncoder::pixel_pool(pool_grid)),
        other => Err(CliError::Config(format!(
            "unknown encoder {other:?} (expected pose or pixel)"
        ))),
    }
}

/// Gathers pair samples per episode, joining each episode with its
/// extracted keyframe record. Episodes without a record are skipped.
fn collect_pairs(
    episodes: &[LoadedEpisode],
    keyframes: &Path,
    log: Log,
) -> (Vec<(String, Vec<PairSample>)>, usize) {
    let mut out = Vec::new();
    let mut failed = 0usize;
    for ep in episodes {
        let record_path = keyframes.join(&ep.rel_dir).join("keyframes.json");
        let record: KeyframeRecord = match read_json(&record_path) {
            Ok(r) => r,
            Err(e) => {
                failed += 1;
                log.warn(
                    "keyframes_missing",
                    fields!(id = ep.entry.id, path = record_path.display(), error = e),
                );
                continue;
            }
        };
        let keys = KeyFrameSet::new(record.indices, record.epsilon, ep.episode.len());
        match build_pair_dataset(&ep.episode, &keys) {
            Ok(pairs) => out.push((ep.entry.id.clone(), pairs)),
            Err(e) => {
                failed += 1;
                log.warn("pairing_failed", fields!(id = ep.entry.id, error = e));
            }
        }
    }
    (out, failed)
}

/// Deterministic episode-level split: episodes are ranked by a seeded
/// hash of their id and the lowest-ranked fraction is held out.
fn split_episodes(
    pairs: Vec<(String, Vec<PairSample>)>,
    holdout: f64,
    seed: u64,
) -> (Vec<PairSample>, Vec<PairSample>) {
    let mut ranked: Vec<(u64, Vec<PairSample>)> = pairs
        .into_iter()
        .map(|(id, p)| (mix_seed(seed, &id, 0), p))
        .collect();
    ranked.sort_by_key(|(rank, _)| *rank);
    let n = ranked.len();
    let n_eval = ((holdout * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut eval = Vec::new();
    let mut train = Vec::new();
    for (i, (_, p)) in ranked.into_iter().enumerate() {
        if i < n_eval {
            eval.extend(p);
        } else {
            train.extend(p);
        }
    }
    (train, eval)
}

fn holdout_rmse(model: &GapEstimator, pairs: &[PairSample]) -> Result<Option<f64>, CliError> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut predictions = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    for s in pairs {
        let a = Obs { frame: s.frame_a.as_ref(), pose: s.pose_a.as_ref() };
        let b = Obs { frame: s.frame_b.as_ref(), pose: s.pose_b.as_ref() };
        predictions.push(predict_gap(model, a, b)?);
        truths.push(s.gap);
    }
    Ok(Some(gap_rmse(&predictions, &truths)?))
}

pub fn train(args: TrainArgs, log: Log) -> Result<(), CliError> {
    let encoder = parse_encoder(&args.encoder, args.pool_grid)?;
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(CliError::Config(format!(
            "holdout {} outside [0, 1)",
            args.holdout
        )));
    }

    let manifest = RunManifest::new(
        "gap-train",
        None,
        Some(&args.dataset),
        &args.out,
        args.split_seed,
    );
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, load_failed) = load_episodes(&args.dataset, log)?;
    let (pairs, pair_failed) = collect_pairs(&episodes, &args.keyframes, log);
    let failed = load_failed + pair_failed;
    let (train_eps, eval_eps) = {
        let n = pairs.len();
        let n_eval = ((args.holdout * n as f64).round() as usize).min(n.saturating_sub(1));
        (n - n_eval, n_eval)
    };
    let (train_pairs, eval_pairs) = split_episodes(pairs, args.holdout, args.split_seed);
    if train_pairs.is_empty() {
        return Err(CliError::Data("no keyframe pairs to train on".into()));
    }

    let model = match args.head.as_str() {
        "linear" => train_gap_estimator(&train_pairs, &encoder, args.lambda)?,
        "mlp" => train_gap_estimator_mlp(
            &train_pairs,
            &encoder,
            &MlpOptions {
                hidden: args.hidden,
                epochs: args.epochs,
                learning_rate: args.learning_rate,
                seed: args.split_seed,
            },
        )?,
        other => {
            return Err(CliError::Config(format!(
                "unknown head {other:?} (expected linear or mlp)"
            )))
        }
    };
    let rmse = holdout_rmse(&model, &eval_pairs)?;

    write_json(&args.out.join("model.json"), &model)?;
    let report = TrainReport {
        encoder: args.encoder,
        head: args.head,
        lambda: args.lambda,
        train_episodes: train_eps,
        eval_episodes: eval_eps,
        train_pairs: train_pairs.len(),
        eval_pairs: eval_pairs.len(),
        holdout_rmse_frames: rmse,
        training: model.summary.clone(),
    };
    write_json(&args.out.join("train_summary.json"), &report)?;
    log.info(
        "model_trained",
        fields!(
            train_pairs = report.train_pairs,
            eval_pairs = report.eval_pairs,
            holdout_rmse = rmse.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
        ),
    );
    println!(
        "trained {} pairs, holdout rmse {}",
        report.train_pairs,
        rmse.map(|r| format!("{r:.4} frames")).unwrap_or_else(|| "n/a".into())
    );
    finish(failed, "episode(s)")
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Dataset directory or index.json path.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding the extracted keyframes.json tree.
    #[arg(long)]
    pub keyframes: PathBuf,
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory (gap_eval.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    dataset: String,
    model: String,
    pairs: usize,
    rmse_frames: f64,
    /// Published full-scale deep-encoder range, for context only; the
    /// desk-scale encoders here are not expected to match it.
    reference_rmse_frames: (f64, f64),
}

pub fn eval(args: EvalArgs, log: Log) -> Result<(), CliError> {
    let model: GapEstimator = read_json(&args.model)
        .map_err(|e| CliError::Config(format!("model {}: {e}", args.model.display())))?;

    let manifest = RunManifest::new("gap-eval", None, Some(&args.dataset), &args.out, 0);
    write_run_manifest(&args.out, &manifest)?;

    let (episodes, load_failed) = load_episodes(&args.dataset, log)?;
    let (pairs, pair_failed) = collect_pairs(&episodes, &args.keyframes, log);
    let failed = load_failed + pair_failed;
    let all: Vec<PairSample> = pairs.into_iter().flat_map(|(_, p)| p).collect();
    if all.is_empty() {
        return Err(CliError::Data("no keyframe pairs to evaluate".into()));
    }
    let rmse = holdout_rmse(&model, &all)?.expect("non-empty pairs");

    let report = EvalReport {
        dataset: args.dataset.display().to_string(),
        model: args.model.display().to_string(),
        pairs: all.len(),
        rmse_frames: rmse,
        reference_rmse_frames: reference::GAP_RMSE_RANGE,
    };
    write_json(&args.out.join("gap_eval.json"), &report)?;
    log.info(
        "gap_eval_done",
        fields!(pairs = report.pairs, rmse = format!("{rmse:.4}")),
    );
    println!("gap rmse {:.4} frames over {} pairs", rmse, report.pairs);
    finish(failed, "episode(s)")
}
