//! Keyframe generation stage behind a pluggable interface.
//!
//! The real system would run a conditional video model here; at desk scale
//! the stand-ins are an oracle that returns ground-truth frames and a
//! noisy oracle that perturbs them with seeded Gaussian pixel noise. Both
//! charge a configurable simulated cost per generated frame so the cost
//! model has something real to measure.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{mix_seed, slice_keyframes, CoreError, Episode, Frame, KeyFrameSet};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid generator config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Oracle,
    NoisyOracle,
}

/// Thread-safe accumulator for simulated generation cost, in seconds.
/// Generation calls may run concurrently; accrual tolerates that.
#[derive(Debug, Default)]
pub struct CostLedger(Mutex<f64>);

impl CostLedger {
    pub fn accrue(&self, seconds: f64) {
        *self.0.lock().expect("ledger poisoned") += seconds;
    }

    pub fn total(&self) -> f64 {
        *self.0.lock().expect("ledger poisoned")
    }

    pub fn reset(&self) {
        *self.0.lock().expect("ledger poisoned") = 0.0;
    }
}

/// Keyframe generator configuration plus its shared cost ledger.
///
/// Immutable after construction; clones share the ledger, so a pipeline
/// can hand copies to workers and still read one total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyFrameGenerator {
    pub kind: GeneratorKind,
    /// Pixel-intensity noise std (noisy_oracle only); 0 degrades to oracle.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds charged (and slept) per generated keyframe, so
    /// wall-clock benchmarks track the analytic cost model.
    #[serde(default)]
    pub simulated_cost_per_frame: f64,
    #[serde(skip)]
    ledger: Arc<CostLedger>,
}

impl KeyFrameGenerator {
    pub fn oracle() -> Self {
        Self {
            kind: GeneratorKind::Oracle,
            noise_sigma: 0.0,
            seed: 0,
            simulated_cost_per_frame: 0.0,
            ledger: Arc::default(),
        }
    }

    pub fn noisy_oracle(noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::NoisyOracle,
            noise_sigma,
            seed,
            simulated_cost_per_frame: 0.0,
            ledger: Arc::default(),
        }
    }

    pub fn with_simulated_cost(mut self, seconds_per_frame: f64) -> Self {
        self.simulated_cost_per_frame = seconds_per_frame;
        self
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(GeneratorError::BadConfig("noise_sigma must be ≥ 0".into()));
        }
        if !self.simulated_cost_per_frame.is_finite() || self.simulated_cost_per_frame < 0.0 {
            return Err(GeneratorError::BadConfig(
                "simulated_cost_per_frame must be ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

fn add_pixel_noise(frame: &Frame, sigma: f64, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let pixels = frame
        .pixels
        .iter()
        .map(|&p| (p as f64 + normal.sample(&mut rng)).clamp(0.0, 255.0).round() as u8)
        .collect();
    Frame::new(frame.width, frame.height, frame.channels, pixels)
}

/// Produces frames at exactly `keys.indices`.
///
/// The oracle returns the episode's own frames; the noisy oracle perturbs
/// each with i.i.d. Gaussian pixel noise seeded by (generator seed,
/// episode id, frame index), so output is identical no matter which
/// worker generates which frame. Every call sleeps and accrues
/// `simulated_cost_per_frame × |K|`.
pub fn generate_keyframes(
    gen: &KeyFrameGenerator,
    episode: &Episode,
    keys: &KeyFrameSet,
) -> Result<Vec<Frame>, GeneratorError> {
    gen.validate()?;
    let slices = slice_keyframes(episode, keys)?;
    let frames = slices
        .into_iter()
        .map(|(index, frame, _)| match gen.kind {
            GeneratorKind::Oracle => frame,
            GeneratorKind::NoisyOracle => {
                if gen.noise_sigma == 0.0 {
                    frame
                } else {
                    add_pixel_noise(
                        &frame,
                        gen.noise_sigma,
                        mix_seed(gen.seed, &episode.id, index as u64),
                    )
                }
            }
        })
        .collect();
    let cost = gen.simulated_cost_per_frame * keys.len() as f64;
    if cost > 0.0 {
        thread::sleep(Duration::from_secs_f64(cost));
    }
    gen.ledger.accrue(cost);
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::tests::toy_episode;
    use crate::metrics::psnr_frame;

    fn all_keys(n: usize) -> KeyFrameSet {
        KeyFrameSet::new((0..n).collect(), 0.0, n)
    }

    fn sparse_keys(n: usize) -> KeyFrameSet {
        KeyFrameSet::new(vec![0, n / 3, 2 * n / 3, n - 1], 0.1, n)
    }

    #[test]
    fn oracle_returns_ground_truth_bits() {
        let ep = toy_episode(30);
        let keys = sparse_keys(30);
        let frames = generate_keyframes(&KeyFrameGenerator::oracle(), &ep, &keys).unwrap();
        let expect: Vec<Frame> = slice_keyframes(&ep, &keys)
            .unwrap()
            .into_iter()
            .map(|(_, f, _)| f)
            .collect();
        assert_eq!(frames, expect);
    }

    #[test]
    fn zero_sigma_noisy_oracle_is_oracle() {
        let ep = toy_episode(12);
        let keys = sparse_keys(12);
        let noisy = generate_keyframes(&KeyFrameGenerator::noisy_oracle(0.0, 7), &ep, &keys).unwrap();
        let clean = generate_keyframes(&KeyFrameGenerator::oracle(), &ep, &keys).unwrap();
        assert_eq!(noisy, clean);
    }

    #[test]
    fn noise_statistics_on_constant_frame() {
        let mut ep = toy_episode(3);
        ep.frames = (0..3).map(|_| Frame::constant(64, 64, 1, 128)).collect();
        let keys = KeyFrameSet::new(vec![0, 1, 2], 0.0, 3);
        let frames =
            generate_keyframes(&KeyFrameGenerator::noisy_oracle(5.0, 99), &ep, &keys).unwrap();
        let pixels: Vec<f64> = frames[1].pixels.iter().map(|&p| p as f64).collect();
        assert!(pixels.len() >= 4096);
        let mean = pixels.iter().sum::<f64>() / pixels.len() as f64;
        let std = (pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
            / pixels.len() as f64)
            .sqrt();
        assert!((mean - 128.0).abs() < 1.0, "mean {mean}");
        assert!((4.0..=6.0).contains(&std), "std {std}");
    }

    #[test]
    fn noisy_generation_is_deterministic_and_index_dependent() {
        let mut ep = toy_episode(6);
        ep.frames = (0..6).map(|_| Frame::constant(16, 16, 1, 100)).collect();
        let keys = KeyFrameSet::new(vec![0, 2, 5], 0.0, 6);
        let gen = KeyFrameGenerator::noisy_oracle(6.0, 3);
        let a = generate_keyframes(&gen, &ep, &keys).unwrap();
        let b = generate_keyframes(&gen, &ep, &keys).unwrap();
        assert_eq!(a, b);
        // Identical source pixels, different indices → different noise.
        assert_ne!(a[0], a[1]);
        assert_ne!(a[1], a[2]);

        let mut other = ep.clone();
        other.id = "toy-2".into();
        let c = generate_keyframes(&gen, &other, &keys).unwrap();
        assert_ne!(a[0], c[0], "episode id must separate noise streams");
    }

    #[test]
    fn psnr_degrades_with_sigma_on_average() {
        let mut ep = toy_episode(2);
        ep.frames = vec![Frame::constant(32, 32, 1, 90), Frame::constant(32, 32, 1, 90)];
        let keys = KeyFrameSet::new(vec![0, 1], 0.0, 2);
        let sigmas = [2.0, 5.0, 10.0, 20.0];
        let mut means = Vec::new();
        for &sigma in &sigmas {
            let mut acc = 0.0;
            for seed in 0..20 {
                let gen = KeyFrameGenerator::noisy_oracle(sigma, seed);
                let frames = generate_keyframes(&gen, &ep, &keys).unwrap();
                acc += psnr_frame(&frames[0], &ep.frames[0]).unwrap().0;
            }
            means.push(acc / 20.0);
        }
        for pair in means.windows(2) {
            assert!(pair[1] < pair[0], "psnr means not decreasing: {means:?}");
        }
    }

    #[test]
    fn ledger_accrues_per_call_and_across_threads() {
        let ep = toy_episode(10);
        let keys = sparse_keys(10);
        let gen = KeyFrameGenerator::oracle().with_simulated_cost(0.0005);
        generate_keyframes(&gen, &ep, &keys).unwrap();
        generate_keyframes(&gen, &ep, &keys).unwrap();
        let expect = 2.0 * 0.0005 * keys.len() as f64;
        assert!((gen.ledger().total() - expect).abs() < 1e-12);

        gen.ledger().reset();
        let copies: Vec<KeyFrameGenerator> = (0..8).map(|_| gen.clone()).collect();
        crate::exec::par_map(copies, |g| {
            generate_keyframes(&g, &toy_episode(10), &sparse_keys(10)).unwrap();
        });
        let expect = 8.0 * 0.0005 * keys.len() as f64;
        assert!((gen.ledger().total() - expect).abs() < 1e-12);
    }

    #[test]
    fn simulated_cost_actually_sleeps() {
        let ep = toy_episode(8);
        let keys = KeyFrameSet::new(vec![0, 3, 7], 0.0, 8);
        let gen = KeyFrameGenerator::oracle().with_simulated_cost(0.01);
        let (out, secs) = crate::metrics::time_seconds(|| generate_keyframes(&gen, &ep, &keys));
        out.unwrap();
        assert!(secs >= 0.029, "expected ≥ 30ms of simulated work, got {secs}s");
    }

    #[test]
    fn out_of_range_keys_error() {
        let ep = toy_episode(5);
        let keys = KeyFrameSet::new(vec![0, 9], 0.0, 5);
        assert!(generate_keyframes(&KeyFrameGenerator::oracle(), &ep, &keys).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let ep = toy_episode(5);
        let keys = all_keys(5);
        let mut gen = KeyFrameGenerator::noisy_oracle(-1.0, 0);
        assert!(generate_keyframes(&gen, &ep, &keys).is_err());
        gen.noise_sigma = 1.0;
        gen.simulated_cost_per_frame = f64::NAN;
        assert!(generate_keyframes(&gen, &ep, &keys).is_err());
    }

    #[test]
    fn config_serde_uses_snake_case_kinds() {
        let gen = KeyFrameGenerator::noisy_oracle(5.0, 11).with_simulated_cost(0.25);
        let json = serde_json::to_string(&gen).unwrap();
        assert!(json.contains("\"noisy_oracle\""));
        let back: KeyFrameGenerator = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kind, gen.kind);
        assert_eq!(back.noise_sigma, gen.noise_sigma);
        assert_eq!(back.seed, gen.seed);
        assert_eq!(back.simulated_cost_per_frame, gen.simulated_cost_per_frame);
        let oracle: KeyFrameGenerator = serde_json::from_str("{\"kind\":\"oracle\"}").unwrap();
        assert_eq!(oracle.kind, GeneratorKind::Oracle);
    }
}
