//! Keyframe-factorized world-model pipeline at desk scale.
//!
//! A robot episode (pose trajectory + rendered frames + task text) is
//! compressed to a sparse set of motion-aware keyframes, the keyframes are
//! produced by a pluggable generator, the temporal gaps between them are
//! regressed from frame embeddings, and the full video is rebuilt by
//! interpolation. The crate also carries the accounting needed to compare
//! that factorization against uniform keyframe placement and against
//! frame-to-frame generation: PSNR/SSIM, trajectory complexity, a
//! CV-weighted quality index, and a cost model with measured benchmarks.
//!
//! Module map:
//! - [`core`]: domain types (poses, trajectories, frames, episodes, key sets)
//! - [`io`]: episode manifests, pose CSV, PGM/PNG frames, dataset indexes
//! - [`simplify`]: relative-threshold RDP extraction and the bisection on ε
//! - [`synthworld`]: deterministic planar-arm world producing ground truth
//! - [`generator`]: oracle / noisy-oracle keyframe generators + cost ledger
//! - [`gapnet`]: pair features, ridge/MLP gap regression, gap normalization
//! - [`interp`]: pixel-linear and pose-rerender interpolation, reconstruction
//! - [`metrics`]: PSNR, SSIM, complexity, quality index, cost model, bench
//! - [`pipeline`]: end-to-end episode runs and multi-arm comparisons
//! - [`exec`]: batch map helpers, parallel when the `parallel` feature is on

pub mod core;
pub mod exec;
pub mod gapnet;
pub mod generator;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod simplify;
pub mod synthworld;

pub use crate::core::{Episode, Frame, KeyFrameSet, PoseState, Trajectory};
