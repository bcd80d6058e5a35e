//! Deterministic desk-scale world: a planar kinematic arm executing
//! scripted piecewise-linear motions over a handful of tabletop objects,
//! rasterized to small grayscale frames.
//!
//! Everything is a pure function of its inputs, so episodes regenerate
//! byte-identically — the property every golden file and reconstruction
//! test in this workspace leans on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{lerp_pose, Episode, Frame, PoseState, Trajectory};

/// Default square canvas edge for rendered frames.
pub const DEFAULT_CANVAS: usize = 64;
/// Gripper apertures below this count as closed (able to hold an object).
pub const GRIP_THRESHOLD: f64 = 0.5;

const LINK_VALUE: u8 = 180;
const OBJECT_VALUE: u8 = 100;
const GRIPPER_VALUE_MIN: u8 = 64;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("pose has {got} values, arm needs {expected}")]
    Shape { expected: usize, got: usize },
    #[error("invalid script: {0}")]
    BadScript(String),
    #[error("segment {segment} target is unreachable")]
    Unreachable { segment: usize },
    #[error("invalid arm spec: {0}")]
    BadSpec(String),
}

/// Planar arm geometry: links chained from a fixed base, plus a gripper
/// at the end-effector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub link_lengths: Vec<f64>,
    pub base: [f64; 2],
    pub gripper_radius: f64,
}

impl Default for ArmSpec {
    fn default() -> Self {
        Self {
            link_lengths: vec![1.0, 0.8, 0.6],
            base: [0.0, 0.0],
            gripper_radius: 0.15,
        }
    }
}

impl ArmSpec {
    pub fn n_links(&self) -> usize {
        self.link_lengths.len()
    }

    /// Pose vector length this arm expects: one angle per link + aperture.
    pub fn pose_dim(&self) -> usize {
        self.n_links() + 1
    }

    /// Maximum end-effector distance from the base.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Half-edge of the square workspace window rendered to the canvas,
    /// slightly padded beyond the arm's reach.
    pub fn workspace_half_extent(&self) -> f64 {
        1.1 * self.reach()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.link_lengths.is_empty() {
            return Err(SynthError::BadSpec("arm needs at least one link".into()));
        }
        if self.link_lengths.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(SynthError::BadSpec("link lengths must be positive".into()));
        }
        if !self.gripper_radius.is_finite() || self.gripper_radius <= 0.0 {
            return Err(SynthError::BadSpec("gripper radius must be positive".into()));
        }
        if self.base.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::BadSpec("base must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectShape {
    Disk,
    Square,
}

/// A tabletop object: drawn filled, grasped by proximity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: ObjectShape,
    pub position: [f64; 2],
    pub radius: f64,
}

/// One motion segment: interpolate linearly to `target` over `duration`
/// frames at constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub target: PoseState,
    pub duration: usize,
}

/// A scripted task: a language condition, a starting pose, the piecewise
/// targets, and the initial object layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub name: String,
    pub description: String,
    pub start: PoseState,
    pub segments: Vec<Segment>,
    pub objects: Vec<SceneObject>,
}

impl TaskScript {
    /// Total episode length this script produces: 1 + Σ durations.
    pub fn total_frames(&self) -> usize {
        1 + self.segments.iter().map(|s| s.duration).sum::<usize>()
    }

    /// Frame indices where segments start/stop: 0, then each cumulative
    /// duration. These are the only indices where the pose's second
    /// difference can be nonzero.
    pub fn breakpoints(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut acc = 0;
        for seg in &self.segments {
            acc += seg.duration;
            out.push(acc);
        }
        out
    }

    pub fn validate(&self, spec: &ArmSpec) -> Result<(), SynthError> {
        spec.validate()?;
        if self.segments.is_empty() {
            return Err(SynthError::BadScript("script needs at least one segment".into()));
        }
        let dim = spec.pose_dim();
        if self.start.dim() != dim {
            return Err(SynthError::Shape {
                expected: dim,
                got: self.start.dim(),
            });
        }
        if !self.start.is_finite() {
            return Err(SynthError::BadScript("start pose must be finite".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.duration < 1 {
                return Err(SynthError::BadScript(format!("segment {i} has zero duration")));
            }
            if seg.target.dim() != dim {
                return Err(SynthError::Shape {
                    expected: dim,
                    got: seg.target.dim(),
                });
            }
            if !seg.target.is_finite() {
                return Err(SynthError::BadScript(format!("segment {i} target not finite")));
            }
            let joints = forward_kinematics(&seg.target, spec)?;
            let ee = joints[joints.len() - 1];
            let dist = ((ee[0] - spec.base[0]).powi(2) + (ee[1] - spec.base[1]).powi(2)).sqrt();
            if dist > spec.reach() + 1e-9 {
                return Err(SynthError::Unreachable { segment: i });
            }
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if !obj.radius.is_finite() || obj.radius <= 0.0 {
                return Err(SynthError::BadScript(format!("object {i} radius must be positive")));
            }
            if obj.position.iter().any(|v| !v.is_finite()) {
                return Err(SynthError::BadScript(format!("object {i} position not finite")));
            }
        }
        Ok(())
    }
}

/// Joint positions from base to end-effector under cumulative angles:
/// `p_j = p_{j−1} + L_j · (cos θ̂_j, sin θ̂_j)`.
///
/// The pose may carry exactly one angle per link, or one extra trailing
/// value (the gripper aperture), which is ignored here.
pub fn forward_kinematics(pose: &PoseState, spec: &ArmSpec) -> Result<Vec<[f64; 2]>, SynthError> {
    let links = spec.n_links();
    if pose.dim() != links && pose.dim() != links + 1 {
        return Err(SynthError::Shape {
            expected: links,
            got: pose.dim(),
        });
    }
    let mut positions = Vec::with_capacity(links + 1);
    positions.push(spec.base);
    let mut angle = 0.0;
    let mut at = spec.base;
    for (j, &len) in spec.link_lengths.iter().enumerate() {
        angle += pose.values[j];
        at = [at[0] + len * angle.cos(), at[1] + len * angle.sin()];
        positions.push(at);
    }
    Ok(positions)
}

/// End-effector position only.
pub fn end_effector(pose: &PoseState, spec: &ArmSpec) -> Result<[f64; 2], SynthError> {
    let joints = forward_kinematics(pose, spec)?;
    Ok(joints[joints.len() - 1])
}

/// Expands a script into its full pose trajectory.
///
/// Frame 0 is the start pose; each segment contributes `duration` frames
/// interpolated linearly from the previous anchor to its target. Anchors
/// land bit-exactly (see [`lerp_pose`]).
pub fn build_pose_trajectory(script: &TaskScript, fps: f64) -> Result<Trajectory, SynthError> {
    if script.segments.is_empty() {
        return Err(SynthError::BadScript("script needs at least one segment".into()));
    }
    let dim = script.start.dim();
    for seg in &script.segments {
        if seg.target.dim() != dim {
            return Err(SynthError::Shape {
                expected: dim,
                got: seg.target.dim(),
            });
        }
        if seg.duration < 1 {
            return Err(SynthError::BadScript("zero-duration segment".into()));
        }
    }
    let mut states = Vec::with_capacity(script.total_frames());
    states.push(script.start.clone());
    let mut anchor = script.start.clone();
    for seg in &script.segments {
        let d = seg.duration;
        for t in 1..=d {
            states.push(lerp_pose(&anchor, &seg.target, t as f64 / d as f64));
        }
        anchor = seg.target.clone();
    }
    Ok(Trajectory::from_states(states, fps))
}

/// Replays the grasp rule over a pose sequence, returning each frame's
/// object layout.
///
/// An object is grasped when the gripper is closed (aperture below
/// [`GRIP_THRESHOLD`]) and overlaps it (center distance ≤ gripper radius +
/// object radius); while held it rides the end-effector exactly, and it
/// stays wherever the gripper reopens. At most one object is held at a
/// time; the lowest-index candidate wins.
pub fn track_objects(
    states: &[PoseState],
    script: &TaskScript,
    spec: &ArmSpec,
) -> Result<Vec<Vec<SceneObject>>, SynthError> {
    let dim = spec.pose_dim();
    let mut current = script.objects.clone();
    let mut held: Option<usize> = None;
    let mut out = Vec::with_capacity(states.len());
    for pose in states {
        if pose.dim() != dim {
            return Err(SynthError::Shape {
                expected: dim,
                got: pose.dim(),
            });
        }
        let ee = end_effector(pose, spec)?;
        let aperture = pose.values[dim - 1];
        if let Some(i) = held {
            if aperture >= GRIP_THRESHOLD {
                held = None;
            } else {
                current[i].position = ee;
            }
        }
        if held.is_none() && aperture < GRIP_THRESHOLD {
            for (i, obj) in current.iter_mut().enumerate() {
                let d = ((obj.position[0] - ee[0]).powi(2) + (obj.position[1] - ee[1]).powi(2))
                    .sqrt();
                if d <= spec.gripper_radius + obj.radius {
                    held = Some(i);
                    obj.position = ee;
                    break;
                }
            }
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Square viewport centered on the arm base, mapped to the canvas with a
/// uniform scale. World y points up; pixel y points down.
struct View {
    scale: f64,
    center: [f64; 2],
    half_px: [f64; 2],
}

impl View {
    fn new(spec: &ArmSpec, width: usize, height: usize) -> Self {
        let he = spec.workspace_half_extent();
        let edge = width.min(height).max(2) as f64 - 1.0;
        Self {
            scale: edge / (2.0 * he),
            center: spec.base,
            half_px: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
        }
    }

    fn to_px(&self, p: [f64; 2]) -> (i64, i64) {
        let x = self.half_px[0] + (p[0] - self.center[0]) * self.scale;
        let y = self.half_px[1] - (p[1] - self.center[1]) * self.scale;
        (x.round() as i64, y.round() as i64)
    }

    fn radius_px(&self, r: f64) -> i64 {
        ((r * self.scale).round() as i64).max(1)
    }
}

fn put(frame: &mut Frame, x: i64, y: i64, value: u8) {
    if x < 0 || y < 0 || x >= frame.width as i64 || y >= frame.height as i64 {
        return;
    }
    frame.pixels[y as usize * frame.width + x as usize] = value;
}

fn fill_disk(frame: &mut Frame, cx: i64, cy: i64, r: i64, value: u8) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(frame, cx + dx, cy + dy, value);
            }
        }
    }
}

fn fill_square(frame: &mut Frame, cx: i64, cy: i64, r: i64, value: u8) {
    for dy in -r..=r {
        for dx in -r..=r {
            put(frame, cx + dx, cy + dy, value);
        }
    }
}

/// Bresenham walk stamping a disk at every step: a thick, anti-alias-free
/// segment.
fn thick_segment(frame: &mut Frame, a: (i64, i64), b: (i64, i64), r: i64, value: u8) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        fill_disk(frame, x, y, r, value);
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Rasterizes one pose over an explicit object layout. Draw order is
/// objects, then links, then the gripper disk, whose intensity encodes the
/// aperture (closed = dim, open = bright). Anything outside the viewport
/// is clipped silently.
pub fn render_scene(
    pose: &PoseState,
    objects: &[SceneObject],
    spec: &ArmSpec,
    width: usize,
    height: usize,
) -> Result<Frame, SynthError> {
    let mut frame = Frame::constant(width, height, 1, 0);
    let view = View::new(spec, width, height);
    for obj in objects {
        let (cx, cy) = view.to_px(obj.position);
        let r = view.radius_px(obj.radius);
        match obj.shape {
            ObjectShape::Disk => fill_disk(&mut frame, cx, cy, r, OBJECT_VALUE),
            ObjectShape::Square => fill_square(&mut frame, cx, cy, r, OBJECT_VALUE),
        }
    }
    let joints = forward_kinematics(pose, spec)?;
    let stroke = ((width.min(height) as i64) / 48).max(1);
    for pair in joints.windows(2) {
        thick_segment(
            &mut frame,
            view.to_px(pair[0]),
            view.to_px(pair[1]),
            stroke,
            LINK_VALUE,
        );
    }
    let aperture = if pose.dim() > spec.n_links() {
        pose.values[pose.dim() - 1].clamp(0.0, 1.0)
    } else {
        1.0
    };
    let value = GRIPPER_VALUE_MIN
        + ((255 - GRIPPER_VALUE_MIN) as f64 * aperture).round() as u8;
    let (ex, ey) = view.to_px(joints[joints.len() - 1]);
    fill_disk(&mut frame, ex, ey, view.radius_px(spec.gripper_radius), value);
    Ok(frame)
}

/// Rasterizes one pose against the script's initial object layout.
pub fn render_frame(
    pose: &PoseState,
    script: &TaskScript,
    spec: &ArmSpec,
    width: usize,
    height: usize,
) -> Result<Frame, SynthError> {
    render_scene(pose, &script.objects, spec, width, height)
}

/// Renders frames for an arbitrary pose sequence with object tracking
/// replayed from frame 0. Reconstruction uses this to re-render videos
/// that compare byte-for-byte with simulated ones.
pub fn render_episode_frames(
    states: &[PoseState],
    script: &TaskScript,
    spec: &ArmSpec,
    width: usize,
    height: usize,
) -> Result<Vec<Frame>, SynthError> {
    let layouts = track_objects(states, script, spec)?;
    states
        .iter()
        .zip(&layouts)
        .map(|(pose, objects)| render_scene(pose, objects, spec, width, height))
        .collect()
}

/// Simulates a script end to end: pose trajectory, grasp tracking, and
/// rendered frames on the default canvas.
///
/// The seed is carried for interface stability; the base simulator is
/// exact and ignores it.
pub fn simulate_task(
    script: &TaskScript,
    spec: &ArmSpec,
    fps: f64,
    seed: u64,
) -> Result<Episode, SynthError> {
    let _ = seed;
    script.validate(spec)?;
    let trajectory = build_pose_trajectory(script, fps)?;
    let frames = render_episode_frames(
        &trajectory.states,
        script,
        spec,
        DEFAULT_CANVAS,
        DEFAULT_CANVAS,
    )?;
    Ok(Episode {
        id: script.name.clone(),
        description: script.description.clone(),
        frames,
        trajectory,
        fps,
    })
}

pub mod suites {
    //! Built-in script generators: reproducible task families for dataset
    //! synthesis and benchmarks.

    use super::*;
    use crate::core::{apportion, mix_seed};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Per-joint angular rates (radians per frame) used by the
    /// constant-velocity suite. Motion is always in the positive
    /// direction, so the frame count between any two poses is an exact
    /// linear function of the pose difference — the property the gap
    /// estimator's closed-form fit banks on.
    pub const CV_RATES: [f64; 3] = [0.02, 0.03, 0.025];

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "kebab-case")]
    pub enum SuiteKind {
        /// Grasp-carry-release choreography with a guaranteed pickup.
        PickPlace,
        /// One joint sweeping at a fixed rate per segment.
        Cv,
        /// Segment counts ramping from 1 to 8 across the suite.
        Mixed,
    }

    impl std::str::FromStr for SuiteKind {
        type Err = String;

        fn from_str(s: &str) -> Result<Self, Self::Err> {
            match s {
                "pick-place" | "pick_place" | "pickplace" => Ok(SuiteKind::PickPlace),
                "cv" | "constant-velocity" => Ok(SuiteKind::Cv),
                "mixed" => Ok(SuiteKind::Mixed),
                other => Err(format!(
                    "unknown suite {other:?} (expected pick-place, cv, or mixed)"
                )),
            }
        }
    }

    impl std::fmt::Display for SuiteKind {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            let name = match self {
                SuiteKind::PickPlace => "pick-place",
                SuiteKind::Cv => "cv",
                SuiteKind::Mixed => "mixed",
            };
            f.write_str(name)
        }
    }

    /// Generates `count` scripts of the given family, each `total_frames`
    /// long, for the default arm. Scripts depend only on (kind, index,
    /// seed, total_frames), never on generation order.
    pub fn generate(
        kind: SuiteKind,
        count: usize,
        total_frames: usize,
        seed: u64,
    ) -> Result<Vec<TaskScript>, SynthError> {
        if total_frames < 16 {
            return Err(SynthError::BadScript(format!(
                "suite episodes need at least 16 frames, got {total_frames}"
            )));
        }
        let spec = ArmSpec::default();
        let mut scripts = Vec::with_capacity(count);
        for i in 0..count {
            let tag = kind.to_string();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &tag, i as u64));
            let script = match kind {
                SuiteKind::PickPlace => pick_place(i, total_frames, &mut rng),
                SuiteKind::Cv => constant_velocity(i, total_frames, &mut rng),
                SuiteKind::Mixed => mixed(i, count, total_frames, &mut rng),
            };
            script.validate(&spec)?;
            scripts.push(script);
        }
        Ok(scripts)
    }

    fn random_angles(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..3).map(|_| rng.random_range(-1.2..1.2)).collect()
    }

    fn pose(angles: &[f64], aperture: f64) -> PoseState {
        let mut v = angles.to_vec();
        v.push(aperture);
        PoseState::new(v)
    }

    /// Splits `total` frames over `n` segments: random weights, largest-
    /// remainder rounding, minimum one frame each.
    fn split_durations(rng: &mut ChaCha8Rng, n: usize, total: usize) -> Vec<usize> {
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(8.0..20.0)).collect();
        let mut parts = apportion(&weights, total);
        // Steal from the largest part until every part is at least 1.
        for i in 0..parts.len() {
            while parts[i] < 1 {
                let j = (0..parts.len()).max_by_key(|&j| parts[j]).unwrap();
                parts[j] -= 1;
                parts[i] += 1;
            }
        }
        parts
    }

    fn pick_place(i: usize, total_frames: usize, rng: &mut ChaCha8Rng) -> TaskScript {
        let spec = ArmSpec::default();
        let start = random_angles(rng);
        let grasp_at = random_angles(rng);
        // Keep carry visibly away from the grasp pose so the object moves.
        let carry = loop {
            let c = random_angles(rng);
            let l1: f64 = c
                .iter()
                .zip(&grasp_at)
                .map(|(a, b)| (a - b).abs())
                .sum();
            if l1 > 0.3 {
                break c;
            }
        };
        let retreat = random_angles(rng);

        let ee = end_effector(&pose(&grasp_at, 0.0), &spec).expect("valid pose");
        let object = SceneObject {
            shape: ObjectShape::Disk,
            position: ee,
            radius: rng.random_range(0.10..0.18),
        };

        let durations = split_durations(rng, 5, total_frames - 1);
        let segments = vec![
            Segment { target: pose(&grasp_at, 1.0), duration: durations[0] },
            Segment { target: pose(&grasp_at, 0.0), duration: durations[1] },
            Segment { target: pose(&carry, 0.0), duration: durations[2] },
            Segment { target: pose(&carry, 1.0), duration: durations[3] },
            Segment { target: pose(&retreat, 1.0), duration: durations[4] },
        ];
        let direction = if end_effector(&pose(&carry, 0.0), &spec).expect("valid pose")[0] < ee[0]
        {
            "left"
        } else {
            "right"
        };
        TaskScript {
            name: format!("pick-place-{i:03}"),
            description: format!("pick up the disk and move it {direction}"),
            start: pose(&start, 1.0),
            segments,
            objects: vec![object],
        }
    }

    fn constant_velocity(i: usize, total_frames: usize, rng: &mut ChaCha8Rng) -> TaskScript {
        let mut angles: Vec<f64> = (0..3).map(|_| rng.random_range(-0.9..-0.3)).collect();
        let start = pose(&angles, 1.0);
        let mut segments = Vec::new();
        let mut remaining = total_frames - 1;
        let mut k = 0usize;
        while remaining > 0 {
            let mut d = rng.random_range(3..=10).min(remaining);
            if remaining - d < 3 {
                d = remaining;
            }
            let j = k % 3;
            angles[j] += CV_RATES[j] * d as f64;
            segments.push(Segment {
                target: pose(&angles, 1.0),
                duration: d,
            });
            remaining -= d;
            k += 1;
        }
        TaskScript {
            name: format!("cv-{i:03}"),
            description: "sweep one joint per segment at a fixed rate".into(),
            start,
            segments,
            objects: Vec::new(),
        }
    }

    fn mixed(i: usize, count: usize, total_frames: usize, rng: &mut ChaCha8Rng) -> TaskScript {
        let spec = ArmSpec::default();
        // Deterministic complexity ramp across the suite: early episodes
        // are single-segment, late ones turn often.
        let n_segments = 1 + (i * 8) / count.max(1);
        let n_segments = n_segments.min(8).min(total_frames - 1);
        let start_angles = random_angles(rng);
        let mut segments = Vec::with_capacity(n_segments);
        let durations = split_durations(rng, n_segments, total_frames - 1);
        for &d in &durations {
            let aperture = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            segments.push(Segment {
                target: pose(&random_angles(rng), aperture),
                duration: d,
            });
        }
        let objects = if i % 2 == 0 {
            let anchor = &segments[rng.random_range(0..segments.len())].target;
            let ee = end_effector(anchor, &spec).expect("valid pose");
            vec![SceneObject {
                shape: if i % 4 == 0 { ObjectShape::Disk } else { ObjectShape::Square },
                position: ee,
                radius: rng.random_range(0.10..0.22),
            }]
        } else {
            Vec::new()
        };
        TaskScript {
            name: format!("mixed-{i:03}"),
            description: format!("follow a {n_segments}-leg sweep over the desk"),
            start: pose(&start_angles, 1.0),
            segments,
            objects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::DEFAULT_FPS;
    use crate::metrics::trajectory_complexity;
    use crate::simplify::{rdp_simplify, select_keyframes_by_count, SimplifyParams};
    use std::f64::consts::FRAC_PI_2;
    use std::path::PathBuf;

    fn two_link_spec() -> ArmSpec {
        ArmSpec {
            link_lengths: vec![1.0, 1.0],
            base: [0.0, 0.0],
            gripper_radius: 0.15,
        }
    }

    fn simple_script(segments: Vec<Segment>, objects: Vec<SceneObject>) -> TaskScript {
        TaskScript {
            name: "test".into(),
            description: "scripted test motion".into(),
            start: PoseState::new(vec![0.0, 0.0, 0.0, 1.0]),
            segments,
            objects,
        }
    }

    #[test]
    fn fk_straight_arm() {
        let p = forward_kinematics(&PoseState::new(vec![0.0, 0.0]), &two_link_spec()).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p[2][0] - 2.0).abs() < 1e-12);
        assert!(p[2][1].abs() < 1e-12);
    }

    #[test]
    fn fk_quarter_turn() {
        let p =
            forward_kinematics(&PoseState::new(vec![FRAC_PI_2, 0.0]), &two_link_spec()).unwrap();
        assert!(p[2][0].abs() < 1e-12);
        assert!((p[2][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fk_elbow_bend() {
        let p = forward_kinematics(
            &PoseState::new(vec![FRAC_PI_2, -FRAC_PI_2]),
            &two_link_spec(),
        )
        .unwrap();
        assert!((p[2][0] - 1.0).abs() < 1e-12);
        assert!((p[2][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fk_accepts_trailing_aperture_and_rejects_bad_shapes() {
        let spec = two_link_spec();
        assert!(forward_kinematics(&PoseState::new(vec![0.0, 0.0, 1.0]), &spec).is_ok());
        assert!(forward_kinematics(&PoseState::new(vec![0.0]), &spec).is_err());
        assert!(forward_kinematics(&PoseState::new(vec![0.0; 5]), &spec).is_err());
    }

    #[test]
    fn single_segment_is_collinear() {
        let script = simple_script(
            vec![Segment {
                target: PoseState::new(vec![1.0, -0.5, 0.25, 0.0]),
                duration: 20,
            }],
            Vec::new(),
        );
        let ep = simulate_task(&script, &ArmSpec::default(), DEFAULT_FPS, 0).unwrap();
        assert_eq!(ep.len(), 21);
        let keys = rdp_simplify(&ep.trajectory, &SimplifyParams::with_epsilon(0.01)).unwrap();
        assert_eq!(keys.indices, vec![0, 20]);
    }

    #[test]
    fn complexity_is_sum_of_segment_displacements() {
        let targets = [
            PoseState::new(vec![0.8, 0.0, 0.0, 1.0]),
            PoseState::new(vec![0.8, -0.6, 0.0, 1.0]),
            PoseState::new(vec![0.8, -0.6, 0.4, 0.0]),
        ];
        let script = simple_script(
            targets
                .iter()
                .map(|t| Segment {
                    target: t.clone(),
                    duration: 10,
                })
                .collect(),
            Vec::new(),
        );
        let traj = build_pose_trajectory(&script, DEFAULT_FPS).unwrap();
        let complexity = trajectory_complexity(&traj);
        // L1 displacements: 0.8, 0.6, 0.4 + 1.0 (aperture close).
        assert!((complexity - 2.8).abs() < 1e-9);
    }

    #[test]
    fn simulation_is_deterministic() {
        let scripts = suites::generate(suites::SuiteKind::PickPlace, 1, 41, 9).unwrap();
        let spec = ArmSpec::default();
        let a = simulate_task(&scripts[0], &spec, DEFAULT_FPS, 7).unwrap();
        let b = simulate_task(&scripts[0], &spec, DEFAULT_FPS, 7).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.trajectory.states, b.trajectory.states);
    }

    #[test]
    fn interior_frames_are_exactly_linear() {
        let script = simple_script(
            vec![
                Segment {
                    target: PoseState::new(vec![0.9, 0.1, -0.7, 0.0]),
                    duration: 7,
                },
                Segment {
                    target: PoseState::new(vec![-0.2, 0.5, 0.3, 1.0]),
                    duration: 9,
                },
            ],
            Vec::new(),
        );
        let traj = build_pose_trajectory(&script, DEFAULT_FPS).unwrap();
        for (a, b) in [(0usize, 7usize), (7, 16)] {
            let sa = &traj.states[a];
            let sb = &traj.states[b];
            for t in a..=b {
                let alpha = (t - a) as f64 / (b - a) as f64;
                for (k, v) in traj.states[t].values.iter().enumerate() {
                    let expect = sa.values[k] + alpha * (sb.values[k] - sa.values[k]);
                    assert!((v - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rdp_recovers_segment_breakpoints() {
        let scripts = suites::generate(suites::SuiteKind::Mixed, 6, 81, 3).unwrap();
        for script in &scripts[3..] {
            let traj = build_pose_trajectory(script, DEFAULT_FPS).unwrap();
            let breakpoints = script.breakpoints();
            let sel = select_keyframes_by_count(
                &traj,
                breakpoints.len(),
                &SimplifyParams::default(),
            )
            .unwrap();
            assert!(sel.exact, "script {} did not reach breakpoint count", script.name);
            assert_eq!(sel.keys.indices, breakpoints, "script {}", script.name);
        }
    }

    #[test]
    fn grasped_object_tracks_then_releases() {
        let spec = ArmSpec::default();
        let grasp_pose = PoseState::new(vec![0.4, -0.3, 0.2, 0.0]);
        let carry_pose = PoseState::new(vec![-0.5, 0.2, 0.1, 0.0]);
        let obj_at = end_effector(&grasp_pose, &spec).unwrap();
        let script = TaskScript {
            name: "grasp-test".into(),
            description: "grab and move the disk".into(),
            start: PoseState::new(vec![0.4, -0.3, 0.2, 1.0]),
            segments: vec![
                Segment { target: grasp_pose.clone(), duration: 4 },
                Segment { target: carry_pose.clone(), duration: 6 },
                Segment {
                    target: PoseState::new(vec![-0.5, 0.2, 0.1, 1.0]),
                    duration: 4,
                },
            ],
            objects: vec![SceneObject {
                shape: ObjectShape::Disk,
                position: obj_at,
                radius: 0.12,
            }],
        };
        let traj = build_pose_trajectory(&script, DEFAULT_FPS).unwrap();
        let layouts = track_objects(&traj.states, &script, &spec).unwrap();

        // Start: gripper open above the object — untouched.
        assert_eq!(layouts[0][0].position, obj_at);
        // End of closing segment: held, still at the grasp point.
        assert_eq!(layouts[4][0].position, obj_at);
        // While carrying, the object rides the end-effector.
        for (t, layout) in layouts.iter().enumerate().take(11).skip(5) {
            let ee = end_effector(&traj.states[t], &spec).unwrap();
            assert_eq!(layout[0].position, ee, "frame {t}");
        }
        // After reopening, it stays where it was released.
        let released = layouts[14][0].position;
        let carry_ee = end_effector(&carry_pose, &spec).unwrap();
        assert!((released[0] - carry_ee[0]).abs() < 1e-9);
        assert!((released[1] - carry_ee[1]).abs() < 1e-9);
        let moved = ((released[0] - obj_at[0]).powi(2) + (released[1] - obj_at[1]).powi(2)).sqrt();
        assert!(moved > 0.05, "object should have been carried, moved {moved}");
    }

    #[test]
    fn rendering_is_pure() {
        let spec = ArmSpec::default();
        let script = simple_script(
            vec![Segment {
                target: PoseState::new(vec![0.3, 0.3, 0.3, 0.0]),
                duration: 4,
            }],
            vec![SceneObject {
                shape: ObjectShape::Disk,
                position: [1.0, 1.0],
                radius: 0.2,
            }],
        );
        let pose = PoseState::new(vec![0.2, -0.1, 0.4, 0.7]);
        let a = render_frame(&pose, &script, &spec, 64, 64).unwrap();
        let b = render_frame(&pose, &script, &spec, 64, 64).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().any(|&p| p > 0), "scene should not be blank");
    }

    #[test]
    fn offscreen_objects_clip_silently() {
        let spec = ArmSpec::default();
        let pose = PoseState::new(vec![0.2, -0.1, 0.4, 1.0]);
        let near = simple_script(vec![], Vec::new());
        let far = simple_script(
            vec![],
            vec![SceneObject {
                shape: ObjectShape::Square,
                position: [100.0, -250.0],
                radius: 0.3,
            }],
        );
        let without = render_scene(&pose, &near.objects, &spec, 64, 64).unwrap();
        let with = render_scene(&pose, &far.objects, &spec, 64, 64).unwrap();
        assert_eq!(without, with);
    }

    #[test]
    fn gripper_intensity_encodes_aperture() {
        let spec = ArmSpec::default();
        let script = simple_script(vec![], Vec::new());
        let open = render_frame(
            &PoseState::new(vec![0.0, 0.0, 0.0, 1.0]),
            &script,
            &spec,
            64,
            64,
        )
        .unwrap();
        let closed = render_frame(
            &PoseState::new(vec![0.0, 0.0, 0.0, 0.0]),
            &script,
            &spec,
            64,
            64,
        )
        .unwrap();
        assert_eq!(open.pixels.iter().max(), Some(&255));
        assert!(closed.pixels.iter().max() < Some(&255));
        assert_ne!(open, closed);
    }

    #[test]
    fn canonical_scene_matches_golden() {
        let spec = ArmSpec::default();
        let script = TaskScript {
            name: "canonical".into(),
            description: "reference scene".into(),
            start: PoseState::new(vec![0.6, -0.4, 0.3, 0.35]),
            segments: vec![Segment {
                target: PoseState::new(vec![0.6, -0.4, 0.3, 0.35]),
                duration: 1,
            }],
            objects: vec![
                SceneObject {
                    shape: ObjectShape::Disk,
                    position: [1.2, 0.9],
                    radius: 0.25,
                },
                SceneObject {
                    shape: ObjectShape::Square,
                    position: [-0.8, 1.1],
                    radius: 0.3,
                },
            ],
        };
        let frame = render_frame(
            &PoseState::new(vec![0.6, -0.4, 0.3, 0.35]),
            &script,
            &spec,
            64,
            64,
        )
        .unwrap();
        let path: PathBuf = [
            env!("CARGO_MANIFEST_DIR"),
            "tests",
            "golden",
            "canonical_scene.pgm",
        ]
        .iter()
        .collect();
        if !path.exists() {
            // First run freezes the reference; later runs must match it.
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, crate::io::encode_pgm(&frame).unwrap()).unwrap();
        }
        let golden = crate::io::decode_pgm(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(frame, golden, "canonical scene drifted from the golden file");
    }

    #[test]
    fn script_validation_rejects_malformed_scripts() {
        let spec = ArmSpec::default();
        let empty = simple_script(vec![], Vec::new());
        assert!(matches!(
            empty.validate(&spec),
            Err(SynthError::BadScript(_))
        ));
        let zero_dur = simple_script(
            vec![Segment {
                target: PoseState::new(vec![0.0, 0.0, 0.0, 1.0]),
                duration: 0,
            }],
            Vec::new(),
        );
        assert!(zero_dur.validate(&spec).is_err());
        let bad_dim = simple_script(
            vec![Segment {
                target: PoseState::new(vec![0.0, 0.0]),
                duration: 3,
            }],
            Vec::new(),
        );
        assert!(matches!(
            bad_dim.validate(&spec),
            Err(SynthError::Shape { .. })
        ));
    }

    #[test]
    fn script_json_roundtrip() {
        let scripts = suites::generate(suites::SuiteKind::PickPlace, 2, 81, 4).unwrap();
        let json = serde_json::to_string(&scripts[1]).unwrap();
        let back: TaskScript = serde_json::from_str(&json).unwrap();
        assert_eq!(back, scripts[1]);
    }

    #[test]
    fn suites_produce_valid_episodes() {
        let spec = ArmSpec::default();
        for kind in [
            suites::SuiteKind::PickPlace,
            suites::SuiteKind::Cv,
            suites::SuiteKind::Mixed,
        ] {
            let scripts = suites::generate(kind, 4, 81, 11).unwrap();
            assert_eq!(scripts.len(), 4);
            for script in &scripts {
                assert_eq!(script.total_frames(), 81, "suite {kind}");
                let ep = simulate_task(script, &spec, DEFAULT_FPS, 0).unwrap();
                assert!(
                    crate::core::validate_episode(&ep).is_empty(),
                    "suite {kind} script {} produced invalid episode",
                    script.name
                );
            }
        }
    }

    #[test]
    fn pick_place_always_moves_the_object() {
        let spec = ArmSpec::default();
        let scripts = suites::generate(suites::SuiteKind::PickPlace, 6, 81, 21).unwrap();
        for script in &scripts {
            let traj = build_pose_trajectory(script, DEFAULT_FPS).unwrap();
            let layouts = track_objects(&traj.states, script, &spec).unwrap();
            let first = layouts.first().unwrap()[0].position;
            let last = layouts.last().unwrap()[0].position;
            let moved = ((last[0] - first[0]).powi(2) + (last[1] - first[1]).powi(2)).sqrt();
            assert!(moved > 0.05, "script {}: object moved only {moved}", script.name);
        }
    }

    #[test]
    fn cv_suite_moves_one_joint_per_segment_positively() {
        let scripts = suites::generate(suites::SuiteKind::Cv, 3, 81, 33).unwrap();
        for script in &scripts {
            let mut anchor = script.start.clone();
            for (k, seg) in script.segments.iter().enumerate() {
                let mut moved = Vec::new();
                for j in 0..3 {
                    let delta = seg.target.values[j] - anchor.values[j];
                    if delta.abs() > 1e-12 {
                        moved.push((j, delta));
                    }
                }
                assert_eq!(moved.len(), 1, "segment {k} of {}", script.name);
                let (j, delta) = moved[0];
                assert_eq!(j, k % 3);
                assert!(delta > 0.0);
                let rate = delta / seg.duration as f64;
                assert!((rate - suites::CV_RATES[j]).abs() < 1e-9);
                anchor = seg.target.clone();
            }
        }
    }
}
