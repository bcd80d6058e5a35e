//! Gap estimation between consecutive keyframes.
//!
//! Two keyframes are encoded, stacked with their difference into one
//! feature vector, and a regression head predicts how many intermediate
//! frames lie between them. Trajectory-level normalization then turns raw
//! predictions into integer gaps that tile the episode exactly.
//!
//! The default head is closed-form ridge regression — deterministic, no
//! iterative training. A small two-layer perceptron trained by fixed-seed
//! batch gradient descent is available behind the same interface.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{apportion, slice_keyframes, Episode, Frame, KeyFrameSet, PoseState};

#[derive(Debug, Error)]
pub enum GapError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("pose required by pose_passthrough encoder but not provided")]
    MissingPose,
    #[error("frame required by pixel_pool encoder but not provided")]
    MissingFrame,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("negative gap {0} in training data")]
    NegativeGap(f64),
    #[error("model is not trained")]
    Untrained,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("normalize_gaps: {0}")]
    BadNormalization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Block-average the frame to a g×g grid, flattened, scaled to [0,1].
    PixelPool,
    /// Use the robot pose vector directly.
    PosePassthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEncoder {
    pub kind: EncoderKind,
    /// Pool grid edge g (pixel_pool only).
    #[serde(default = "default_pool_grid")]
    pub pool_grid: usize,
}

fn default_pool_grid() -> usize {
    8
}

impl FrameEncoder {
    pub fn pixel_pool(pool_grid: usize) -> Self {
        Self { kind: EncoderKind::PixelPool, pool_grid }
    }

    pub fn pose_passthrough() -> Self {
        Self { kind: EncoderKind::PosePassthrough, pool_grid: 0 }
    }

    pub fn validate(&self) -> Result<(), GapError> {
        if self.kind == EncoderKind::PixelPool && self.pool_grid == 0 {
            return Err(GapError::BadConfig("pixel_pool needs pool_grid ≥ 1".into()));
        }
        Ok(())
    }
}

/// One observation: whichever of frame/pose the chosen encoder needs.
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a> {
    pub frame: Option<&'a Frame>,
    pub pose: Option<&'a PoseState>,
}

impl<'a> Obs<'a> {
    pub fn frame(frame: &'a Frame) -> Self {
        Self { frame: Some(frame), pose: None }
    }

    pub fn pose(pose: &'a PoseState) -> Self {
        Self { frame: None, pose: Some(pose) }
    }

    pub fn both(frame: &'a Frame, pose: &'a PoseState) -> Self {
        Self { frame: Some(frame), pose: Some(pose) }
    }
}

/// Encodes a frame (or pose) into the latent the gap head consumes.
///
/// pixel_pool: the frame is divided into a g×g grid of ceil-sized blocks;
/// each output entry is the mean of the pixels its block actually covers,
/// divided by 255. Blocks that fall entirely outside the frame (g larger
/// than the image) contribute 0. Multichannel pixels are averaged to gray
/// first. pose_passthrough returns the pose values unchanged.
pub fn encode_frame(
    frame: Option<&Frame>,
    encoder: &FrameEncoder,
    pose: Option<&PoseState>,
) -> Result<Vec<f64>, GapError> {
    encoder.validate()?;
    match encoder.kind {
        EncoderKind::PosePassthrough => {
            let pose = pose.ok_or(GapError::MissingPose)?;
            Ok(pose.values.clone())
        }
        EncoderKind::PixelPool => {
            let frame = frame.ok_or(GapError::MissingFrame)?;
            let g = encoder.pool_grid;
            let (w, h, c) = (frame.width, frame.height, frame.channels);
            let block_w = w.div_ceil(g);
            let block_h = h.div_ceil(g);
            let mut out = Vec::with_capacity(g * g);
            for by in 0..g {
                for bx in 0..g {
                    let y0 = (by * block_h).min(h);
                    let y1 = ((by + 1) * block_h).min(h);
                    let x0 = (bx * block_w).min(w);
                    let x1 = ((bx + 1) * block_w).min(w);
                    let count = (y1 - y0) * (x1 - x0);
                    if count == 0 {
                        out.push(0.0);
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let base = (y * w + x) * c;
                            let mut px = 0.0;
                            for ch in 0..c {
                                px += frame.pixels[base + ch] as f64;
                            }
                            acc += px / c as f64;
                        }
                    }
                    out.push(acc / count as f64 / 255.0);
                }
            }
            Ok(out)
        }
    }
}

/// The pair feature `z = [Enc(x_a) ‖ Enc(x_b) ‖ Enc(x_b) − Enc(x_a)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeature {
    pub z: Vec<f64>,
}

pub fn build_pair_features(fa: &[f64], fb: &[f64]) -> Result<PairFeature, GapError> {
    if fa.len() != fb.len() {
        return Err(GapError::DimensionMismatch(fa.len(), fb.len()));
    }
    let mut z = Vec::with_capacity(3 * fa.len());
    z.extend_from_slice(fa);
    z.extend_from_slice(fb);
    z.extend(fa.iter().zip(fb).map(|(a, b)| b - a));
    Ok(PairFeature { z })
}

fn encode_obs(obs: Obs<'_>, encoder: &FrameEncoder) -> Result<Vec<f64>, GapError> {
    encode_frame(obs.frame, encoder, obs.pose)
}

/// One training sample: a keyframe pair and the true number of
/// intermediate frames between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub frame_a: Option<Frame>,
    pub frame_b: Option<Frame>,
    pub pose_a: Option<PoseState>,
    pub pose_b: Option<PoseState>,
    pub gap: f64,
}

impl PairSample {
    pub fn from_frames(a: Frame, b: Frame, gap: f64) -> Self {
        Self { frame_a: Some(a), frame_b: Some(b), pose_a: None, pose_b: None, gap }
    }

    pub fn from_poses(a: PoseState, b: PoseState, gap: f64) -> Self {
        Self { frame_a: None, frame_b: None, pose_a: Some(a), pose_b: Some(b), gap }
    }

    fn obs_a(&self) -> Obs<'_> {
        Obs { frame: self.frame_a.as_ref(), pose: self.pose_a.as_ref() }
    }

    fn obs_b(&self) -> Obs<'_> {
        Obs { frame: self.frame_b.as_ref(), pose: self.pose_b.as_ref() }
    }
}

/// Expands an episode's keyframe set into consecutive-pair samples with
/// ground-truth gaps, carrying both frames and poses so any encoder works.
pub fn build_pair_dataset(
    episode: &Episode,
    keys: &KeyFrameSet,
) -> Result<Vec<PairSample>, GapError> {
    let slices = slice_keyframes(episode, keys)
        .map_err(|e| GapError::BadConfig(e.to_string()))?;
    let gaps = keys.true_gaps();
    Ok(slices
        .windows(2)
        .zip(gaps)
        .map(|(pair, gap)| PairSample {
            frame_a: Some(pair[0].1.clone()),
            frame_b: Some(pair[1].1.clone()),
            pose_a: Some(pair[0].2.clone()),
            pose_b: Some(pair[1].2.clone()),
            gap: gap as f64,
        })
        .collect())
}

/// Two-layer perceptron parameters (tanh hidden layer, linear output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    /// Hidden weights, row-major `hidden × input`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub hidden: usize,
    pub input: usize,
}

impl MlpHead {
    fn forward(&self, z: &[f64]) -> f64 {
        let mut out = self.b2;
        for h in 0..self.hidden {
            let mut act = self.b1[h];
            for (i, &v) in z.iter().enumerate() {
                act += self.w1[h * self.input + i] * v;
            }
            out += self.w2[h] * act.tanh();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Ridge,
    Mlp,
}

/// Training record stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub samples: usize,
    pub train_rmse: f64,
    /// True when the λ=0 normal equations were singular and the solution
    /// came from an SVD pseudo-inverse instead of Cholesky.
    pub used_pseudo_inverse: bool,
}

/// A trained gap predictor: encoder spec plus regression head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimator {
    pub encoder: FrameEncoder,
    pub head: HeadKind,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
    #[serde(default)]
    pub mlp: Option<MlpHead>,
    pub trained: bool,
    pub summary: TrainingSummary,
}

fn encode_dataset(
    dataset: &[PairSample],
    encoder: &FrameEncoder,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), GapError> {
    if dataset.len() < 2 {
        return Err(GapError::TooFewSamples(dataset.len()));
    }
    let mut xs = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for sample in dataset {
        if sample.gap < 0.0 {
            return Err(GapError::NegativeGap(sample.gap));
        }
        let fa = encode_obs(sample.obs_a(), encoder)?;
        let fb = encode_obs(sample.obs_b(), encoder)?;
        let pair = build_pair_features(&fa, &fb)?;
        xs.push(pair.z);
        ys.push(sample.gap);
    }
    let d = xs[0].len();
    for z in &xs {
        if z.len() != d {
            return Err(GapError::DimensionMismatch(d, z.len()));
        }
    }
    Ok((xs, ys))
}

fn rmse_of(xs: &[Vec<f64>], ys: &[f64], predict: impl Fn(&[f64]) -> f64) -> f64 {
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(z, &g)| {
            let e = predict(z) - g;
            e * e
        })
        .sum();
    (sse / ys.len() as f64).sqrt()
}

/// Closed-form ridge fit of `Σ (w·z + b − g)² + λ‖w‖²` with an unpenalized
/// intercept: features and targets are centered, the normal equations are
/// solved by Cholesky, and the intercept is recovered from the means.
/// A singular system (λ = 0 with redundant features) falls back to the
/// SVD pseudo-inverse, which is recorded in the training summary.
pub fn train_gap_estimator(
    dataset: &[PairSample],
    encoder: &FrameEncoder,
    lambda: f64,
) -> Result<GapEstimator, GapError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(GapError::BadConfig("lambda must be a finite value ≥ 0".into()));
    }
    let (xs, ys) = encode_dataset(dataset, encoder)?;
    let n = xs.len();
    let d = xs[0].len();

    let mut mean_x = vec![0.0; d];
    for z in &xs {
        for (m, v) in mean_x.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut mean_x {
        *m /= n as f64;
    }
    let mean_y = ys.iter().sum::<f64>() / n as f64;

    let xc = nalgebra::DMatrix::from_fn(n, d, |r, c| xs[r][c] - mean_x[c]);
    let yc = nalgebra::DVector::from_fn(n, |r, _| ys[r] - mean_y);

    let gram = xc.transpose() * &xc + nalgebra::DMatrix::identity(d, d) * lambda;
    let rhs = xc.transpose() * &yc;

    let mut used_pseudo_inverse = false;
    let w = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            used_pseudo_inverse = true;
            let svd = gram.svd(true, true);
            svd.solve(&rhs, 1e-12)
                .map_err(|e| GapError::BadConfig(format!("svd solve failed: {e}")))?
        }
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = mean_y - weights.iter().zip(&mean_x).map(|(w, m)| w * m).sum::<f64>();

    let predict = |z: &[f64]| z.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() + intercept;
    let train_rmse = rmse_of(&xs, &ys, predict);

    Ok(GapEstimator {
        encoder: *encoder,
        head: HeadKind::Ridge,
        lambda,
        weights,
        intercept,
        mlp: None,
        trained: true,
        summary: TrainingSummary { samples: n, train_rmse, used_pseudo_inverse },
    })
}

/// Hyperparameters of the perceptron head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self { hidden: 16, epochs: 1500, learning_rate: 0.05, seed: 0 }
    }
}

/// Trains the two-layer head by full-batch gradient descent on the MSE
/// loss. Fixed-seed initialization makes the result a pure function of
/// (dataset, encoder, options). Inputs and targets are standardized
/// internally; stored weights fold the scaling back in at prediction time
/// via the standardization fields of [`MlpHead`]'s enclosing estimator.
pub fn train_gap_estimator_mlp(
    dataset: &[PairSample],
    encoder: &FrameEncoder,
    opts: &MlpOptions,
) -> Result<GapEstimator, GapError> {
    if opts.hidden == 0 || opts.epochs == 0 {
        return Err(GapError::BadConfig("mlp needs hidden ≥ 1 and epochs ≥ 1".into()));
    }
    let (xs, ys) = encode_dataset(dataset, encoder)?;
    let n = xs.len();
    let d = xs[0].len();
    let hidden = opts.hidden;

    // Standardize features and targets so one learning rate fits all
    // datasets; the affine maps are baked into the stored weights below.
    let mut mean_x = vec![0.0; d];
    let mut std_x = vec![0.0; d];
    for z in &xs {
        for (m, v) in mean_x.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut mean_x {
        *m /= n as f64;
    }
    for z in &xs {
        for ((s, v), m) in std_x.iter_mut().zip(z).zip(&mean_x) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std_x {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let std_y = {
        let v = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum::<f64>() / n as f64;
        let s = v.sqrt();
        if s < 1e-12 { 1.0 } else { s }
    };
    let xn: Vec<Vec<f64>> = xs
        .iter()
        .map(|z| z.iter().zip(&mean_x).zip(&std_x).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let yn: Vec<f64> = ys.iter().map(|y| (y - mean_y) / std_y).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = 1.0 / (d as f64).sqrt();
    let mut w1: Vec<f64> = (0..hidden * d).map(|_| rng.random_range(-scale..scale)).collect();
    let mut b1 = vec![0.0; hidden];
    let hscale = 1.0 / (hidden as f64).sqrt();
    let mut w2: Vec<f64> = (0..hidden).map(|_| rng.random_range(-hscale..hscale)).collect();
    let mut b2 = 0.0;

    let mut acts = vec![0.0; hidden];
    for _ in 0..opts.epochs {
        let mut g_w1 = vec![0.0; hidden * d];
        let mut g_b1 = vec![0.0; hidden];
        let mut g_w2 = vec![0.0; hidden];
        let mut g_b2 = 0.0;
        for (z, &y) in xn.iter().zip(&yn) {
            for h in 0..hidden {
                let mut a = b1[h];
                for (i, &v) in z.iter().enumerate() {
                    a += w1[h * d + i] * v;
                }
                acts[h] = a.tanh();
            }
            let pred = b2 + w2.iter().zip(&acts).map(|(w, a)| w * a).sum::<f64>();
            let err = 2.0 * (pred - y) / n as f64;
            g_b2 += err;
            for h in 0..hidden {
                g_w2[h] += err * acts[h];
                let back = err * w2[h] * (1.0 - acts[h] * acts[h]);
                g_b1[h] += back;
                for (i, &v) in z.iter().enumerate() {
                    g_w1[h * d + i] += back * v;
                }
            }
        }
        for (w, g) in w1.iter_mut().zip(&g_w1) {
            *w -= opts.learning_rate * g;
        }
        for (b, g) in b1.iter_mut().zip(&g_b1) {
            *b -= opts.learning_rate * g;
        }
        for (w, g) in w2.iter_mut().zip(&g_w2) {
            *w -= opts.learning_rate * g;
        }
        b2 -= opts.learning_rate * g_b2;
    }

    // Fold the input standardization into w1/b1 and the target scaling
    // into w2/b2 so the stored head consumes raw features directly.
    for h in 0..hidden {
        let mut shift = 0.0;
        for i in 0..d {
            let folded = w1[h * d + i] / std_x[i];
            shift += folded * mean_x[i];
            w1[h * d + i] = folded;
        }
        b1[h] -= shift;
    }
    for w in &mut w2 {
        *w *= std_y;
    }
    let b2 = b2 * std_y + mean_y;

    let mlp = MlpHead { w1, b1, w2, b2, hidden, input: d };
    let train_rmse = rmse_of(&xs, &ys, |z| mlp.forward(z));
    Ok(GapEstimator {
        encoder: *encoder,
        head: HeadKind::Mlp,
        lambda: 0.0,
        weights: Vec::new(),
        intercept: 0.0,
        mlp: Some(mlp),
        trained: true,
        summary: TrainingSummary { samples: n, train_rmse, used_pseudo_inverse: false },
    })
}

impl GapEstimator {
    /// Raw head output for an encoded pair (no clamping).
    fn forward(&self, z: &[f64]) -> Result<f64, GapError> {
        match self.head {
            HeadKind::Ridge => {
                if z.len() != self.weights.len() {
                    return Err(GapError::DimensionMismatch(self.weights.len(), z.len()));
                }
                Ok(z.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() + self.intercept)
            }
            HeadKind::Mlp => {
                let mlp = self.mlp.as_ref().ok_or(GapError::Untrained)?;
                if z.len() != mlp.input {
                    return Err(GapError::DimensionMismatch(mlp.input, z.len()));
                }
                Ok(mlp.forward(z))
            }
        }
    }
}

/// Predicts the (real-valued) gap between two observations, clamped below
/// at zero. Errors if the model is untrained.
pub fn predict_gap(model: &GapEstimator, a: Obs<'_>, b: Obs<'_>) -> Result<f64, GapError> {
    if !model.trained {
        return Err(GapError::Untrained);
    }
    let fa = encode_obs(a, &model.encoder)?;
    let fb = encode_obs(b, &model.encoder)?;
    let z = build_pair_features(&fa, &fb)?.z;
    Ok(model.forward(&z)?.max(0.0))
}

/// Result of trajectory-level gap normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedGaps {
    pub gaps: Vec<usize>,
    /// True when every clamped prediction was zero and the required total
    /// was spread evenly instead.
    pub uniform_fallback: bool,
}

/// Default truncation bound: twice the mean gap, rounded up.
pub fn default_g_max(n: usize, k: usize) -> usize {
    (2 * (n + 1)).div_ceil(k)
}

/// Converts raw per-pair gap predictions into integer gaps that tile the
/// episode: clamp each to [0, g_max], rescale so the total equals
/// `N+1 − |K|`, and round by largest remainder so the integer sum is
/// exact. An all-zero clamped vector distributes the total evenly and
/// flags the fallback.
pub fn normalize_gaps(raw: &[f64], n: usize, g_max: usize) -> Result<NormalizedGaps, GapError> {
    let k = raw.len() + 1;
    if raw.is_empty() {
        return Err(GapError::BadNormalization("need at least one gap (|K| ≥ 2)".into()));
    }
    if n < k {
        return Err(GapError::BadNormalization(format!(
            "episode index N = {n} smaller than keyframe count {k}"
        )));
    }
    if raw.iter().any(|g| !g.is_finite()) {
        return Err(GapError::BadNormalization("non-finite gap prediction".into()));
    }
    let required = n + 1 - k;
    let clamped: Vec<f64> = raw.iter().map(|g| g.clamp(0.0, g_max as f64)).collect();
    if clamped.iter().all(|&g| g == 0.0) && required > 0 {
        let even = vec![1.0; raw.len()];
        return Ok(NormalizedGaps { gaps: apportion(&even, required), uniform_fallback: true });
    }
    Ok(NormalizedGaps { gaps: apportion(&clamped, required), uniform_fallback: false })
}

/// Root-mean-square error between predicted and true gaps, in frames.
pub fn gap_rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, GapError> {
    if predictions.len() != truths.len() {
        return Err(GapError::DimensionMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(GapError::BadConfig("gap_rmse needs at least one pair".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}
