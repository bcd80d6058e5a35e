//! Motion-aware keyframe extraction.
//!
//! A pose trajectory is simplified with a relative-threshold variant of
//! Ramer-Douglas-Peucker: a chord segment splits at its most-deviating
//! interior state whenever that deviation, normalized by the chord length,
//! reaches ε. A binary search on ε then drives the retained count toward a
//! target, which is how keyframe density is controlled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{KeyFrameSet, PoseState, Trajectory};

/// Chord lengths below this are treated as degenerate (closed loops).
pub const DEGENERATE_CHORD: f64 = 1e-9;
/// Dimensions with standard deviation below this are zeroed by
/// standardization instead of blowing up.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("segment [{lo}, {hi}] has no interior point")]
    NoInteriorPoint { lo: usize, hi: usize },
    #[error("trajectory too short: length {0}, need at least {1}")]
    TooShort(usize, usize),
    #[error("target keyframe count {target} outside [2, {max}]")]
    BadTarget { target: usize, max: usize },
}

/// Parameters for one simplification pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifyParams {
    /// Relative deviation threshold; a segment splits when the maximum
    /// interior deviation over the chord length reaches this value.
    pub epsilon: f64,
    /// Z-score each pose dimension before measuring distances. On by
    /// default: pose vectors mix radians, world units and apertures, and
    /// raw Euclidean distance across those is meaningless.
    pub standardize: bool,
    /// Iteration cap for the binary search on ε.
    pub max_bisect_iters: usize,
}

impl Default for SimplifyParams {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            standardize: true,
            max_bisect_iters: 64,
        }
    }
}

impl SimplifyParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    /// Raw-distance variant for single-unit trajectories.
    pub fn raw(epsilon: f64) -> Self {
        Self {
            epsilon,
            standardize: false,
            max_bisect_iters: 64,
        }
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
/// When `a == b` this is simply the distance to that point.
pub fn point_segment_distance(
    p: &PoseState,
    a: &PoseState,
    b: &PoseState,
) -> Result<f64, SimplifyError> {
    let d = p.dim();
    if a.dim() != d {
        return Err(SimplifyError::DimensionMismatch(d, a.dim()));
    }
    if b.dim() != d {
        return Err(SimplifyError::DimensionMismatch(d, b.dim()));
    }
    if !(p.is_finite() && a.is_finite() && b.is_finite()) {
        return Err(SimplifyError::NonFinite);
    }

    let mut ab_sq = 0.0;
    let mut ap_dot_ab = 0.0;
    for i in 0..d {
        let ab = b.values[i] - a.values[i];
        let ap = p.values[i] - a.values[i];
        ab_sq += ab * ab;
        ap_dot_ab += ap * ab;
    }
    if ab_sq == 0.0 {
        return Ok(p.distance(a));
    }
    // Clamp the projection parameter so the distance is to the closed
    // segment, not the infinite line.
    let t = (ap_dot_ab / ab_sq).clamp(0.0, 1.0);
    let mut dist_sq = 0.0;
    for i in 0..d {
        let proj = a.values[i] + t * (b.values[i] - a.values[i]);
        let diff = p.values[i] - proj;
        dist_sq += diff * diff;
    }
    Ok(dist_sq.sqrt())
}

/// Diagonal of the axis-aligned bounding box of all states. Used as the
/// fallback normalizer when a chord degenerates (coincident endpoints).
fn bounding_box_diagonal(traj: &Trajectory) -> f64 {
    let d = traj.dim();
    let mut acc = 0.0;
    for i in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &traj.states {
            lo = lo.min(s.values[i]);
            hi = hi.max(s.values[i]);
        }
        let span = hi - lo;
        acc += span * span;
    }
    acc.sqrt()
}

/// Finds the interior state of `traj[lo..=hi]` that deviates the most from
/// the chord, returning its index and its relative deviation.
///
/// The relative deviation is the point-to-segment distance over the chord
/// length. On a degenerate chord (endpoints within [`DEGENERATE_CHORD`])
/// the distance is normalized by the trajectory's bounding-box diagonal
/// instead, keeping the measure scale-free on closed loops. Ties break
/// toward the smallest index.
pub fn max_deviation(
    traj: &Trajectory,
    lo: usize,
    hi: usize,
) -> Result<(usize, f64), SimplifyError> {
    if hi < lo + 2 {
        return Err(SimplifyError::NoInteriorPoint { lo, hi });
    }
    let diagonal = bounding_box_diagonal(traj);
    max_deviation_inner(traj, lo, hi, diagonal)
}

fn max_deviation_inner(
    traj: &Trajectory,
    lo: usize,
    hi: usize,
    diagonal: f64,
) -> Result<(usize, f64), SimplifyError> {
    let a = &traj.states[lo];
    let b = &traj.states[hi];
    let chord = a.distance(b);

    let mut best_idx = lo + 1;
    let mut best_dist = -1.0;
    for i in (lo + 1)..hi {
        let d = point_segment_distance(&traj.states[i], a, b)?;
        if d > best_dist {
            best_dist = d;
            best_idx = i;
        }
    }

    let relative = if chord > DEGENERATE_CHORD {
        best_dist / chord
    } else if diagonal > 0.0 {
        best_dist / diagonal
    } else {
        0.0
    };
    Ok((best_idx, relative))
}

/// Relative-threshold RDP over the whole trajectory.
///
/// The recursion is driven by an explicit worklist, so trajectory length
/// never threatens the call stack. Endpoints are always retained. A
/// segment splits when its maximum interior relative deviation is both
/// ≥ ε and strictly positive; exactly-on-chord states are never keyframes,
/// which keeps ε = 0 meaningful (it retains every state that deviates at
/// some recursion level, not every state).
pub fn rdp_simplify(traj: &Trajectory, params: &SimplifyParams) -> Result<KeyFrameSet, SimplifyError> {
    let n = traj.len();
    if n < 2 {
        return Err(SimplifyError::TooShort(n, 2));
    }
    let work = if params.standardize {
        standardize_trajectory(traj)?
    } else {
        traj.clone()
    };
    let diagonal = bounding_box_diagonal(&work);

    let mut retained = vec![false; n];
    retained[0] = true;
    retained[n - 1] = true;

    let mut worklist = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = worklist.pop() {
        if hi < lo + 2 {
            continue;
        }
        let (idx, rel) = max_deviation_inner(&work, lo, hi, diagonal)?;
        if rel >= params.epsilon && rel > 0.0 {
            retained[idx] = true;
            worklist.push((lo, idx));
            worklist.push((idx, hi));
        }
    }

    let indices: Vec<usize> = (0..n).filter(|&i| retained[i]).collect();
    Ok(KeyFrameSet::new(indices, params.epsilon, n))
}

/// Outcome of [`select_keyframes_by_count`].
#[derive(Debug, Clone, PartialEq)]
pub struct CountSelection {
    pub keys: KeyFrameSet,
    /// True when the achieved count equals the requested target. The
    /// retained count is a step function of ε, so exactness cannot be
    /// promised; callers get the closest achievable set either way.
    pub exact: bool,
}

/// Binary-searches ε to hit a target keyframe count.
///
/// The search runs on `[0, ε_hi]` where ε_hi collapses the trajectory to
/// its endpoints. Because the retained set at a larger ε is always a
/// subset of the set at a smaller ε, the count is monotone non-increasing
/// and bisection brackets the jump nearest the target. Of the sizes seen,
/// the one closest to the target wins; ties prefer the smallest size that
/// is ≥ the target.
pub fn select_keyframes_by_count(
    traj: &Trajectory,
    target: usize,
    params: &SimplifyParams,
) -> Result<CountSelection, SimplifyError> {
    let n = traj.len();
    if n < 2 {
        return Err(SimplifyError::TooShort(n, 2));
    }
    if target < 2 || target > n {
        return Err(SimplifyError::BadTarget { target, max: n });
    }

    let at = |eps: f64| -> Result<KeyFrameSet, SimplifyError> {
        rdp_simplify(
            traj,
            &SimplifyParams {
                epsilon: eps,
                ..*params
            },
        )
    };

    // Upper bracket: grow ε until only the endpoints survive.
    let mut hi = 1.0;
    let mut keys_hi = at(hi)?;
    let mut guard = 0;
    while keys_hi.len() > 2 && guard < 128 {
        hi *= 2.0;
        keys_hi = at(hi)?;
        guard += 1;
    }

    let keys_lo = at(0.0)?;
    let max_achievable = keys_lo.len();

    let better = |cand: &KeyFrameSet, best: &KeyFrameSet| -> bool {
        let cd = cand.len().abs_diff(target);
        let bd = best.len().abs_diff(target);
        if cd != bd {
            return cd < bd;
        }
        // Tie between one size above and one below: prefer >= target.
        cand.len() >= target && best.len() < target
    };

    let mut best = if better(&keys_hi, &keys_lo) {
        keys_hi.clone()
    } else {
        keys_lo.clone()
    };

    if target >= max_achievable {
        let keys = keys_lo;
        let exact = keys.len() == target;
        return Ok(CountSelection { keys, exact });
    }
    if keys_hi.len() == target {
        return Ok(CountSelection {
            keys: keys_hi,
            exact: true,
        });
    }

    // Invariant: count(lo) >= target > count(hi).
    let mut lo = 0.0;
    for _ in 0..params.max_bisect_iters.max(1) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let keys_mid = at(mid)?;
        if better(&keys_mid, &best) {
            best = keys_mid.clone();
        }
        if keys_mid.len() >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let exact = best.len() == target;
    Ok(CountSelection { keys: best, exact })
}

/// Independently z-scores every pose dimension over the trajectory
/// (population standard deviation). Near-constant dimensions map to zero.
pub fn standardize_trajectory(traj: &Trajectory) -> Result<Trajectory, SimplifyError> {
    let n = traj.len();
    if n < 2 {
        return Err(SimplifyError::TooShort(n, 2));
    }
    let d = traj.dim();
    let mut means = vec![0.0; d];
    for s in &traj.states {
        for (m, v) in means.iter_mut().zip(&s.values) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut stds = vec![0.0; d];
    for s in &traj.states {
        for i in 0..d {
            let dev = s.values[i] - means[i];
            stds[i] += dev * dev;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
    }

    let states = traj
        .states
        .iter()
        .map(|s| {
            PoseState::new(
                (0..d)
                    .map(|i| {
                        if stds[i] < STD_FLOOR {
                            0.0
                        } else {
                            (s.values[i] - means[i]) / stds[i]
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(Trajectory {
        states,
        timestamps: traj.timestamps.clone(),
    })
}
