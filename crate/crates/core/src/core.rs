//! Domain types shared by the whole pipeline, episode validation, and
//! keyframe slicing.
//!
//! Everything here is an immutable value after construction; instances can
//! be shared freely across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default frames per second for generated episodes.
pub const DEFAULT_FPS: f64 = 16.0;
/// Default episode length in frames (index 0 is the conditioning frame).
pub const DEFAULT_EPISODE_FRAMES: usize = 81;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("key set covers {keys} source frames but episode has {episode}")]
    SourceLengthMismatch { keys: usize, episode: usize },
    #[error("{0}")]
    Invalid(String),
}

/// A robot state at one timestep: joint angles, end-effector coordinates,
/// gripper aperture — whatever the trajectory carries, as one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    pub values: Vec<f64>,
}

impl PoseState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance to another pose of the same dimension.
    pub fn distance(&self, other: &PoseState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Linear interpolation between poses, `a·(1−α) + b·α` per component.
///
/// The two-product form is deliberate: at α = 1 it returns `b` bit-exactly,
/// so a trajectory sampled with this function passes through its anchors
/// with no rounding residue. Simulation and reconstruction both route
/// through here, which is what makes re-rendered videos byte-compare
/// against the originals.
pub fn lerp_pose(a: &PoseState, b: &PoseState, alpha: f64) -> PoseState {
    PoseState::new(
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * (1.0 - alpha) + y * alpha)
            .collect(),
    )
}

/// Mixes a root seed with a string tag and an index into a new 64-bit seed
/// (FNV-1a). Used to give every episode/frame its own RNG stream that is
/// stable no matter how work is scheduled across threads.
pub fn mix_seed(root: u64, tag: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    };
    for b in root.to_le_bytes() {
        eat(b);
    }
    for b in tag.bytes() {
        eat(b);
    }
    for b in index.to_le_bytes() {
        eat(b);
    }
    hash
}

/// Largest-remainder apportionment: scales non-negative weights so the
/// rounded parts sum to exactly `total`. Remainders are awarded by size,
/// ties to the lowest index. Degenerate weights (zero/non-finite sum) fall
/// back to an even split, lower indices first.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || sum <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        let base = total / n;
        let extra = total % n;
        return (0..n).map(|i| base + usize::from(i < extra)).collect();
    }
    let scaled: Vec<f64> = weights
        .iter()
        .map(|w| w / sum * total as f64)
        .collect();
    let mut parts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

/// Time-ordered pose states with matching timestamps in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<PoseState>,
    pub timestamps: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory with timestamps `i / fps` (or all zero if fps = 0).
    pub fn from_states(states: Vec<PoseState>, fps: f64) -> Self {
        let timestamps = (0..states.len())
            .map(|i| if fps > 0.0 { i as f64 / fps } else { 0.0 })
            .collect();
        Self { states, timestamps }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Dimension of the pose states, or 0 for an empty trajectory.
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, PoseState::dim)
    }
}

/// An 8-bit raster frame, row-major, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }

    /// Frame filled with a constant intensity.
    pub fn constant(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![value; width * height * channels],
        }
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
    }
}

/// One recorded (or generated) episode: frames plus the pose trajectory that
/// produced them, a text description of the task, and the frame rate.
///
/// Frames are indexed `0..=N`; frame 0 is the conditioning frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub description: String,
    pub frames: Vec<Frame>,
    pub trajectory: Trajectory,
    pub fps: f64,
}

impl Episode {
    /// Number of frames, i.e. N + 1.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Highest frame index N.
    pub fn last_index(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }
}

/// Ordered keyframe indices for one episode, plus the threshold that
/// produced them. Always contains the first and last frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFrameSet {
    pub indices: Vec<usize>,
    pub epsilon: f64,
    pub source_length: usize,
}

impl KeyFrameSet {
    pub fn new(indices: Vec<usize>, epsilon: f64, source_length: usize) -> Self {
        Self {
            indices,
            epsilon,
            source_length,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks the structural invariants: indices strictly increasing, first
    /// index 0, last index N, and 2 ≤ |indices| ≤ N + 1.
    pub fn check(&self) -> Result<(), CoreError> {
        if self.source_length < 2 {
            return Err(CoreError::Invalid(format!(
                "source length {} below 2",
                self.source_length
            )));
        }
        if self.indices.len() < 2 || self.indices.len() > self.source_length {
            return Err(CoreError::Invalid(format!(
                "key count {} outside [2, {}]",
                self.indices.len(),
                self.source_length
            )));
        }
        if self.indices[0] != 0 {
            return Err(CoreError::Invalid("first key index must be 0".into()));
        }
        if *self.indices.last().unwrap() != self.source_length - 1 {
            return Err(CoreError::Invalid(format!(
                "last key index must be {}",
                self.source_length - 1
            )));
        }
        if !self.indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(CoreError::Invalid(
                "key indices must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Ground-truth gaps implied by the indices: intermediate frame counts
    /// between consecutive keys.
    pub fn true_gaps(&self) -> Vec<usize> {
        self.indices.windows(2).map(|w| w[1] - w[0] - 1).collect()
    }
}

/// A single invariant violation found by [`validate_episode`]. Violations
/// are data, not failures: an invalid episode is reported, not rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(field: &str, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        rule: rule.into(),
    }
}

/// Checks every episode invariant and returns the list of violations.
/// An empty report means the episode is well formed.
pub fn validate_episode(episode: &Episode) -> Vec<Violation> {
    let mut report = Vec::new();

    if episode.description.is_empty() {
        report.push(violation("description", "description empty"));
    }
    if episode.frames.len() != episode.trajectory.len() {
        report.push(violation(
            "frames/trajectory",
            format!(
                "length mismatch: {} frames vs {} states",
                episode.frames.len(),
                episode.trajectory.len()
            ),
        ));
    }
    if episode.frames.len() < 2 {
        report.push(violation("frames", "episode must have at least 2 frames"));
    }
    if let Some(first) = episode.frames.first() {
        if !(first.channels == 1 || first.channels == 3) {
            report.push(violation("frames", "channels must be 1 or 3"));
        }
        for (i, f) in episode.frames.iter().enumerate() {
            if !f.same_shape(first) {
                report.push(violation(
                    "frames",
                    format!("frame {i} dimensions differ from frame 0"),
                ));
                break;
            }
        }
        for (i, f) in episode.frames.iter().enumerate() {
            if f.pixels.len() != f.width * f.height * f.channels {
                report.push(violation(
                    "frames",
                    format!("frame {i} pixel count does not match width*height*channels"),
                ));
                break;
            }
        }
    }

    let dim = episode.trajectory.dim();
    if dim == 0 && !episode.trajectory.is_empty() {
        report.push(violation("trajectory", "pose dimension must be >= 1"));
    }
    for (i, s) in episode.trajectory.states.iter().enumerate() {
        if s.dim() != dim {
            report.push(violation(
                "trajectory",
                format!("state {i} dimension {} differs from {}", s.dim(), dim),
            ));
            break;
        }
    }
    if episode
        .trajectory
        .states
        .iter()
        .any(|s| !s.is_finite())
    {
        report.push(violation("trajectory", "pose values must be finite"));
    }
    if episode.trajectory.timestamps.len() != episode.trajectory.states.len() {
        report.push(violation(
            "trajectory",
            "timestamps and states must have equal length",
        ));
    } else if episode.fps > 0.0 {
        if !episode
            .trajectory
            .timestamps
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            report.push(violation(
                "trajectory",
                "timestamps must be strictly increasing",
            ));
        }
    } else if !episode
        .trajectory
        .timestamps
        .windows(2)
        .all(|w| w[0] <= w[1])
    {
        report.push(violation(
            "trajectory",
            "timestamps must be non-decreasing",
        ));
    }

    report
}

/// Extracts the episode content at the key indices, in order.
pub fn slice_keyframes(
    episode: &Episode,
    keys: &KeyFrameSet,
) -> Result<Vec<(usize, Frame, PoseState)>, CoreError> {
    if keys.source_length != episode.len() {
        return Err(CoreError::SourceLengthMismatch {
            keys: keys.source_length,
            episode: episode.len(),
        });
    }
    keys.indices
        .iter()
        .map(|&i| {
            if i >= episode.len() {
                return Err(CoreError::IndexOutOfRange {
                    index: i,
                    len: episode.len(),
                });
            }
            Ok((
                i,
                episode.frames[i].clone(),
                episode.trajectory.states[i].clone(),
            ))
        })
        .collect()
}
