//! Interpolation stage and full-video reconstruction.
//!
//! Keyframes are trusted anchors: interpolation only fills the gaps
//! between them (α = t/(g+1) never reaches an endpoint), and
//! reconstruction places the supplied keyframes into the output
//! bit-exactly.

use thiserror::Error;

use crate::core::{lerp_pose, Frame, PoseState};
use crate::synthworld::{render_episode_frames, render_frame, ArmSpec, SynthError, TaskScript};

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("pose_rerender requires endpoint poses")]
    MissingPoses,
    #[error("{keyframes} keyframes need {} gaps, got {gaps}", keyframes - 1)]
    LengthMismatch { keyframes: usize, gaps: usize },
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Interpolation strategy between two keyframes.
#[derive(Debug, Clone)]
pub enum Interpolator {
    /// Per-pixel linear blend, rounded half-away-from-zero after clamping.
    PixelLinear,
    /// Interpolate the pose linearly and re-render it through the
    /// synthetic world.
    PoseRerender { spec: ArmSpec, script: TaskScript },
}

impl Interpolator {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Interpolator::PixelLinear => "pixel_linear",
            Interpolator::PoseRerender { .. } => "pose_rerender",
        }
    }
}

fn blend_pixels(xa: &Frame, xb: &Frame, alpha: f64) -> Frame {
    let pixels = xa
        .pixels
        .iter()
        .zip(&xb.pixels)
        .map(|(&a, &b)| {
            let v = (1.0 - alpha) * a as f64 + alpha * b as f64;
            v.clamp(0.0, 255.0).round() as u8
        })
        .collect();
    Frame::new(xa.width, xa.height, xa.channels, pixels)
}

/// Produces the g intermediate frames between two keyframes, exclusive of
/// both: frame t uses α = t/(g+1) for t in 1..=g. With g = 0 the result
/// is empty.
///
/// pixel_linear blends raw intensities. pose_rerender interpolates the
/// endpoint poses with the same α and renders each through
/// [`render_frame`] at the keyframes' resolution, against the script's
/// initial object layout.
pub fn interpolate(
    interp: &Interpolator,
    xa: &Frame,
    xb: &Frame,
    g: usize,
    pose_a: Option<&PoseState>,
    pose_b: Option<&PoseState>,
) -> Result<Vec<Frame>, InterpError> {
    if !xa.same_shape(xb) {
        return Err(InterpError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            xa.width, xa.height, xa.channels, xb.width, xb.height, xb.channels
        )));
    }
    let mut out = Vec::with_capacity(g);
    match interp {
        Interpolator::PixelLinear => {
            for t in 1..=g {
                let alpha = t as f64 / (g + 1) as f64;
                out.push(blend_pixels(xa, xb, alpha));
            }
        }
        Interpolator::PoseRerender { spec, script } => {
            let (pa, pb) = match (pose_a, pose_b) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(InterpError::MissingPoses),
            };
            for t in 1..=g {
                let alpha = t as f64 / (g + 1) as f64;
                let pose = lerp_pose(pa, pb, alpha);
                out.push(render_frame(&pose, script, spec, xa.width, xa.height)?);
            }
        }
    }
    Ok(out)
}

/// Output indices the keyframes land on for a given gap vector:
/// position 0, then each previous position + gap + 1.
pub fn keyframe_positions(gaps: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(gaps.len() + 1);
    let mut at = 0;
    out.push(at);
    for &g in gaps {
        at += g + 1;
        out.push(at);
    }
    out
}

/// Expands keyframe poses into the full per-frame pose sequence using the
/// same α schedule as [`interpolate`]. Anchor poses land bit-exactly.
pub fn reconstruct_poses(key_poses: &[PoseState], gaps: &[usize]) -> Vec<PoseState> {
    let total: usize = key_poses.len() + gaps.iter().sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.push(key_poses[0].clone());
    for (i, &g) in gaps.iter().enumerate() {
        let (a, b) = (&key_poses[i], &key_poses[i + 1]);
        for t in 1..=g {
            let alpha = t as f64 / (g + 1) as f64;
            out.push(lerp_pose(a, b, alpha));
        }
        out.push(b.clone());
    }
    out
}

/// Assembles the full video `k_0, [g_0 frames], k_1, [g_1 frames], …`.
///
/// The supplied keyframes are copied into their slots untouched, whatever
/// the interpolator produced around them. pixel_linear fills each gap
/// independently; pose_rerender instead expands the full pose sequence
/// and re-renders it in one pass so object grasp/release state is
/// replayed from frame 0 — per-gap rendering could not know whether an
/// object is currently held.
pub fn reconstruct_video(
    keyframes: &[Frame],
    gaps: &[usize],
    interp: &Interpolator,
    poses: Option<&[PoseState]>,
) -> Result<Vec<Frame>, InterpError> {
    if keyframes.len() < 2 || gaps.len() != keyframes.len() - 1 {
        return Err(InterpError::LengthMismatch {
            keyframes: keyframes.len(),
            gaps: gaps.len(),
        });
    }
    for pair in keyframes.windows(2) {
        if !pair[0].same_shape(&pair[1]) {
            return Err(InterpError::Shape("keyframes differ in shape".into()));
        }
    }
    if let Some(p) = poses {
        if p.len() != keyframes.len() {
            return Err(InterpError::Shape(format!(
                "{} keyframes but {} poses",
                keyframes.len(),
                p.len()
            )));
        }
    }

    match interp {
        Interpolator::PixelLinear => {
            let mut out = Vec::with_capacity(keyframes.len() + gaps.iter().sum::<usize>());
            out.push(keyframes[0].clone());
            for (i, &g) in gaps.iter().enumerate() {
                let (pa, pb) = match poses {
                    Some(p) => (Some(&p[i]), Some(&p[i + 1])),
                    None => (None, None),
                };
                out.extend(interpolate(interp, &keyframes[i], &keyframes[i + 1], g, pa, pb)?);
                out.push(keyframes[i + 1].clone());
            }
            Ok(out)
        }
        Interpolator::PoseRerender { spec, script } => {
            let key_poses = poses.ok_or(InterpError::MissingPoses)?;
            let full = reconstruct_poses(key_poses, gaps);
            let mut frames = render_episode_frames(
                &full,
                script,
                spec,
                keyframes[0].width,
                keyframes[0].height,
            )?;
            for (slot, key) in keyframe_positions(gaps).into_iter().zip(keyframes) {
                frames[slot] = key.clone();
            }
            Ok(frames)
        }
    }
}
