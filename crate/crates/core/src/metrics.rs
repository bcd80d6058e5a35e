//! Quality and cost accounting: PSNR, SSIM, trajectory complexity, the
//! CV-weighted quality index, the keyframe cost model, and a staged
//! wall-clock benchmark harness.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Episode, Frame, Trajectory};

/// SSIM window edge (canonical Gaussian window).
pub const SSIM_WINDOW: usize = 11;
/// SSIM Gaussian standard deviation.
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Cap applied to infinite PSNR when it feeds min-max normalization in the
/// quality index; lossless reconstructions would otherwise poison the
/// scale for every other model.
pub const PSNR_NORMALIZATION_CAP_DB: f64 = 100.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("frame {got_w}x{got_h} smaller than the {want}x{want} SSIM window")]
    TooSmall { got_w: usize, got_h: usize, want: usize },
    #[error("quality index needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("metric {metric:?} missing for model {model:?}")]
    MissingMetric { metric: String, model: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// PSNR value in decibels. Lossless comparisons are genuinely infinite;
/// this newtype keeps that explicit and serializes it as the string
/// `"inf"`, which sorts above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PsnrDb(pub f64);

impl PsnrDb {
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Value with infinity replaced by the normalization cap.
    pub fn capped(self) -> f64 {
        if self.0.is_infinite() {
            PSNR_NORMALIZATION_CAP_DB
        } else {
            self.0
        }
    }
}

impl std::fmt::Display for PsnrDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for PsnrDb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PsnrDb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(PsnrDb(v)),
            Raw::Text(t) if t == "inf" => Ok(PsnrDb(f64::INFINITY)),
            Raw::Text(t) => t
                .parse()
                .map(PsnrDb)
                .map_err(|_| serde::de::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }
}

fn check_same_shape(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

fn sum_squared_error(a: &Frame, b: &Frame) -> f64 {
    a.pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// PSNR between two frames: `10·log10(255² / MSE)`, infinite when equal.
pub fn psnr_frame(a: &Frame, b: &Frame) -> Result<PsnrDb, MetricsError> {
    check_same_shape(a, b)?;
    let mse = sum_squared_error(a, b) / a.pixels.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR between two videos with squared error pooled over every pixel of
/// every frame (not a mean of per-frame PSNRs).
pub fn psnr_video(a: &[Frame], b: &[Frame]) -> Result<PsnrDb, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Shape(format!(
            "video lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MetricsError::Shape("empty videos".into()));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (fa, fb) in a.iter().zip(b) {
        check_same_shape(fa, fb)?;
        sse += sum_squared_error(fa, fb);
        count += fa.pixels.len();
    }
    Ok(psnr_from_mse(sse / count as f64))
}

fn psnr_from_mse(mse: f64) -> PsnrDb {
    if mse == 0.0 {
        PsnrDb(f64::INFINITY)
    } else {
        PsnrDb(10.0 * (255.0 * 255.0 / mse).log10())
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian blur of a `w×h` plane. Output is
/// `(w−10)×(h−10)`.
fn blur_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    // Horizontal pass: rows keep height, width shrinks.
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * plane[y * w + x + i];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let oh = h - SSIM_WINDOW + 1;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * horiz[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let kernel = gaussian_kernel();
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();

    let mu_a = blur_valid(a, w, h, &kernel);
    let mu_b = blur_valid(b, w, h, &kernel);
    let raw_aa = blur_valid(&sq(a), w, h, &kernel);
    let raw_bb = blur_valid(&sq(b), w, h, &kernel);
    let raw_ab = blur_valid(&prod, w, h, &kernel);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = raw_aa[i] - ma * ma;
        let var_b = raw_bb[i] - mb * mb;
        let cov = raw_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Mean local SSIM over valid 11×11 Gaussian windows (σ = 1.5,
/// C1 = (0.01·255)², C2 = (0.03·255)², no padding). Multichannel frames
/// average the per-channel scores.
pub fn ssim_frame(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            got_w: a.width,
            got_h: a.height,
            want: SSIM_WINDOW,
        });
    }
    let (w, h, c) = (a.width, a.height, a.channels);
    let mut acc = 0.0;
    for ch in 0..c {
        let plane = |f: &Frame| -> Vec<f64> {
            f.pixels
                .iter()
                .skip(ch)
                .step_by(c)
                .map(|&p| p as f64)
                .collect()
        };
        acc += ssim_plane(&plane(a), &plane(b), w, h);
    }
    Ok(acc / c as f64)
}

/// Mean per-frame SSIM over two videos of equal length.
pub fn ssim_video(a: &[Frame], b: &[Frame]) -> Result<f64, MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::Shape(format!(
            "video lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut acc = 0.0;
    for (fa, fb) in a.iter().zip(b) {
        acc += ssim_frame(fa, fb)?;
    }
    Ok(acc / a.len() as f64)
}

/// Cumulative absolute state difference: `Σ_t Σ_d |s_{t+1,d} − s_{t,d}|`.
/// Trajectories shorter than 2 states have zero complexity.
pub fn trajectory_complexity(traj: &Trajectory) -> f64 {
    traj.states
        .windows(2)
        .map(|w| {
            w[0].values
                .iter()
                .zip(&w[1].values)
                .map(|(a, b)| (b - a).abs())
                .sum::<f64>()
        })
        .sum()
}

/// Root-mean-square pose error between two equally long trajectories,
/// pooled over every state dimension and frame.
pub fn pose_rmse(a: &Trajectory, b: &Trajectory) -> Result<f64, MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::Shape(format!(
            "trajectory lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        if sa.dim() != sb.dim() {
            return Err(MetricsError::Shape("pose dimension mismatch".into()));
        }
        for (x, y) in sa.values.iter().zip(&sb.values) {
            sse += (x - y) * (x - y);
            count += 1;
        }
    }
    Ok((sse / count as f64).sqrt())
}

/// One model's metrics on one dataset. All metrics are oriented so that
/// larger is better; `extra` carries optional externally supplied columns
/// (e.g. human-annotated accuracy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub model_name: String,
    pub dataset_name: String,
    pub psnr: PsnrDb,
    pub ssim: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

/// CV-weighted quality index over the models of one dataset.
///
/// Each metric column is min-max normalized across models, then weighted
/// by its coefficient of variation (population std over |mean|, computed
/// on the raw values). A column identical across models gets zero weight;
/// if every column does, the score falls back to the unweighted mean.
/// Infinite PSNR is capped at [`PSNR_NORMALIZATION_CAP_DB`] first.
/// Returns `(model_name, score)` in input order, scores in [0, 1].
pub fn quality_index(rows: &[QualityRow]) -> Result<Vec<(String, f64)>, MetricsError> {
    if rows.len() < 2 {
        return Err(MetricsError::TooFewModels(rows.len()));
    }
    let mut metric_names: Vec<String> = vec!["psnr".into(), "ssim".into()];
    for key in rows[0].extra.keys() {
        metric_names.push(key.clone());
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(metric_names.len());
    for name in &metric_names {
        let mut col = Vec::with_capacity(rows.len());
        for row in rows {
            let v = match name.as_str() {
                "psnr" => row.psnr.capped(),
                "ssim" => row.ssim,
                other => *row.extra.get(other).ok_or_else(|| {
                    MetricsError::MissingMetric {
                        metric: other.to_string(),
                        model: row.model_name.clone(),
                    }
                })?,
            };
            col.push(v);
        }
        columns.push(col);
    }

    let n = rows.len() as f64;
    let mut weights = Vec::with_capacity(columns.len());
    let mut normalized: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for col in &columns {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let weight = if mean.abs() < 1e-12 { 0.0 } else { std / mean.abs() };
        weights.push(weight);

        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        normalized.push(if hi - lo < 1e-12 {
            // Zero-weight column anyway; 0.5 keeps the fallback mean in range.
            vec![0.5; col.len()]
        } else {
            col.iter().map(|v| (v - lo) / (hi - lo)).collect()
        });
    }

    let weight_sum: f64 = weights.iter().sum();
    let scores = (0..rows.len())
        .map(|m| {
            if weight_sum > 0.0 {
                normalized
                    .iter()
                    .zip(&weights)
                    .map(|(col, w)| w * col[m])
                    .sum::<f64>()
                    / weight_sum
            } else {
                normalized.iter().map(|col| col[m]).sum::<f64>() / normalized.len() as f64
            }
        })
        .collect::<Vec<f64>>();

    Ok(rows
        .iter()
        .zip(scores)
        .map(|(row, score)| (row.model_name.clone(), score))
        .collect())
}

/// Per-stage wall-clock (or modeled) costs of one reconstruction pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub keyframe_gen_seconds: f64,
    pub gap_estimation_seconds: f64,
    pub interpolation_seconds: f64,
    pub total_seconds: f64,
    pub baseline_seconds: f64,
    pub acceleration: f64,
}

impl CostReport {
    /// Assembles a report from stage costs; total and acceleration are
    /// derived, never supplied.
    pub fn from_stages(keyframe_gen: f64, gap_estimation: f64, interpolation: f64, baseline: f64) -> Self {
        let total = keyframe_gen + gap_estimation + interpolation;
        Self {
            keyframe_gen_seconds: keyframe_gen,
            gap_estimation_seconds: gap_estimation,
            interpolation_seconds: interpolation,
            total_seconds: total,
            baseline_seconds: baseline,
            acceleration: baseline / total,
        }
    }

    /// Checks the arithmetic invariants (total = Σ stages, acceleration =
    /// baseline/total) to 1e−9.
    pub fn is_consistent(&self) -> bool {
        let sum = self.keyframe_gen_seconds + self.gap_estimation_seconds + self.interpolation_seconds;
        (self.total_seconds - sum).abs() <= 1e-9
            && (self.acceleration - self.baseline_seconds / self.total_seconds).abs() <= 1e-9
    }

    /// Fraction of total time spent generating keyframes.
    pub fn keyframe_share(&self) -> f64 {
        self.keyframe_gen_seconds / self.total_seconds
    }
}

/// Analytic cost of reconstructing an (N+1)-frame episode from K keyframes:
/// keyframe stage `K·c_kf`, interpolation `(N+1−K)·c_i`, against a
/// frame-by-frame baseline `(N+1)·c_kf`. `gap_cost` is the flat cost of
/// the gap-estimation stage.
pub fn cost_model(
    n: usize,
    k: usize,
    per_keyframe_cost: f64,
    gap_cost: f64,
    per_interp_frame_cost: f64,
) -> CostReport {
    let frames = (n + 1) as f64;
    CostReport::from_stages(
        k as f64 * per_keyframe_cost,
        gap_cost,
        (frames - k as f64) * per_interp_frame_cost,
        frames * per_keyframe_cost,
    )
}

/// Stage timings of a single measured pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSeconds {
    pub keyframe_gen: f64,
    pub gap_estimation: f64,
    pub interpolation: f64,
}

/// Benchmark controls: repeat count for the median and whether to run an
/// untimed warm-up pass first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub repeats: usize,
    pub warmup: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { repeats: 3, warmup: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBenchmark {
    pub episode_id: String,
    pub report: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub per_episode: Vec<EpisodeBenchmark>,
    /// Stage means over episodes; acceleration of the means.
    pub aggregate: CostReport,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times a closure with the monotonic clock.
pub fn time_seconds<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Measures reconstruction cost per episode: one warm-up pass (excluded),
/// then `repeats` timed passes reduced stage-wise by median. `run`
/// executes a full keyframe pass and reports its stage timings; `baseline`
/// executes the frame-by-frame reference and reports its wall-clock.
/// Episodes run serially — parallel timing would contend and skew.
pub fn benchmark_episodes<E>(
    episodes: &[Episode],
    opts: &BenchmarkOptions,
    mut run: impl FnMut(&Episode) -> Result<StageSeconds, E>,
    mut baseline: impl FnMut(&Episode) -> Result<f64, E>,
) -> Result<BenchmarkSummary, E> {
    let repeats = opts.repeats.max(1);
    let mut per_episode = Vec::with_capacity(episodes.len());
    for episode in episodes {
        if opts.warmup {
            run(episode)?;
        }
        let mut kf = Vec::with_capacity(repeats);
        let mut gap = Vec::with_capacity(repeats);
        let mut interp = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let stages = run(episode)?;
            kf.push(stages.keyframe_gen);
            gap.push(stages.gap_estimation);
            interp.push(stages.interpolation);
        }
        if opts.warmup {
            baseline(episode)?;
        }
        let base = median((0..repeats).map(|_| baseline(episode)).collect::<Result<_, E>>()?);
        per_episode.push(EpisodeBenchmark {
            episode_id: episode.id.clone(),
            report: CostReport::from_stages(median(kf), median(gap), median(interp), base),
        });
    }

    let n = per_episode.len().max(1) as f64;
    let mean = |f: fn(&CostReport) -> f64| -> f64 {
        per_episode.iter().map(|e| f(&e.report)).sum::<f64>() / n
    };
    let aggregate = CostReport::from_stages(
        mean(|r| r.keyframe_gen_seconds),
        mean(|r| r.gap_estimation_seconds),
        mean(|r| r.interpolation_seconds),
        mean(|r| r.baseline_seconds),
    );
    Ok(BenchmarkSummary { per_episode, aggregate })
}

/// One row of the comparison report CSV. Column order is part of the
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub psnr_db: PsnrDb,
    pub ssim: f64,
    pub complexity: f64,
    /// Empty when the comparison had too few models to rank.
    pub quality_index: Option<f64>,
    pub keygen_s: f64,
    pub gap_s: f64,
    pub interp_s: f64,
    pub total_s: f64,
    pub acceleration: f64,
}

/// Writes report rows as CSV with the canonical column order.
pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub mod reference {
    //! Published full-scale reference figures used to sanity-check the
    //! cost model's arithmetic and to anchor report comparisons. Stage
    //! timings are for a diffusion world model on a 10-task desk
    //! benchmark; ranges cover the 10/20/40% keyframe-density variants.

    /// Keyframe-generation stage, seconds.
    pub const STAGE_KEYFRAME_GEN_S: f64 = 160.40;
    /// Gap-estimation stage, seconds.
    pub const STAGE_GAP_ESTIMATION_S: f64 = 0.35;
    /// Frame-interpolation stage, seconds.
    pub const STAGE_INTERPOLATION_S: f64 = 11.97;
    /// Stage total, seconds.
    pub const STAGE_TOTAL_S: f64 = 172.72;
    /// Frame-by-frame baseline, seconds.
    pub const BASELINE_S: f64 = 1001.54;
    /// Gap-prediction RMSE band reported across encoder/head variants at
    /// 20% density (frames).
    pub const GAP_RMSE_RANGE: (f64, f64) = (2.27, 3.57);
    /// Acceleration band across the 40%→10% density sweep.
    pub const ACCELERATION_RANGE: (f64, f64) = (3.12, 8.56);
    /// Headline acceleration at 20% density.
    pub const HEADLINE_ACCELERATION: f64 = 5.68;
}
