//! On-disk formats: PGM/PNG frame sequences, pose CSVs, episode manifests,
//! dataset indexes, and the small JSON sidecars the pipeline emits.
//!
//! An episode on disk is a directory holding `manifest.json`, a `frames/`
//! subdirectory of zero-padded numbered images, and a `poses.csv` with one
//! row per frame.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Episode, Frame, PoseState, Trajectory};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("pgm: {0}")]
    Pgm(String),
    #[error("format: {0}")]
    Format(String),
}

/// Image container for frame sequences. PGM is the default: trivially
/// byte-stable and grayscale like the synthetic world. PNG handles both
/// grayscale and RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    Pgm,
    Png,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            FrameFormat::Png => "png",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "pgm" => Some(FrameFormat::Pgm),
            "png" => Some(FrameFormat::Png),
            _ => None,
        }
    }
}

/// Canonical name of the i-th frame file: `frame_00042.pgm`.
pub fn frame_file_name(index: usize, format: FrameFormat) -> String {
    format!("frame_{index:05}.{}", format.extension())
}

/// Serializes a grayscale frame as binary PGM (P5, maxval 255).
pub fn encode_pgm(frame: &Frame) -> Result<Vec<u8>, IoError> {
    if frame.channels != 1 {
        return Err(IoError::Pgm(format!(
            "PGM is grayscale only, frame has {} channels",
            frame.channels
        )));
    }
    let mut out = Vec::with_capacity(frame.pixels.len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", frame.width, frame.height).as_bytes());
    out.extend_from_slice(&frame.pixels);
    Ok(out)
}

/// Parses a binary PGM (P5, maxval 255). Header comments (`#`) are
/// skipped; trailing bytes beyond the raster are rejected.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame, IoError> {
    let mut pos = 0usize;
    let mut next_token = || -> Result<String, IoError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::Pgm("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = next_token()?;
    if magic != "P5" {
        return Err(IoError::Pgm(format!("expected P5, got {magic:?}")));
    }
    let width: usize = next_token()?
        .parse()
        .map_err(|_| IoError::Pgm("bad width".into()))?;
    let height: usize = next_token()?
        .parse()
        .map_err(|_| IoError::Pgm("bad height".into()))?;
    let maxval: usize = next_token()?
        .parse()
        .map_err(|_| IoError::Pgm("bad maxval".into()))?;
    if maxval != 255 {
        return Err(IoError::Pgm(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(IoError::Pgm("missing raster separator".into()));
    }
    pos += 1;
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() != expected {
        return Err(IoError::Pgm(format!(
            "raster size {} != {}x{}",
            raster.len(),
            width,
            height
        )));
    }
    Ok(Frame::new(width, height, 1, raster.to_vec()))
}

/// Writes one frame to `path`, choosing the codec from the format.
pub fn save_frame(path: &Path, frame: &Frame, format: FrameFormat) -> Result<(), IoError> {
    match format {
        FrameFormat::Pgm => {
            fs::write(path, encode_pgm(frame)?)?;
            Ok(())
        }
        FrameFormat::Png => {
            let (w, h) = (frame.width as u32, frame.height as u32);
            match frame.channels {
                1 => {
                    let img = image::GrayImage::from_raw(w, h, frame.pixels.clone())
                        .ok_or_else(|| IoError::Format("pixel buffer size mismatch".into()))?;
                    img.save(path)?;
                }
                3 => {
                    let img = image::RgbImage::from_raw(w, h, frame.pixels.clone())
                        .ok_or_else(|| IoError::Format("pixel buffer size mismatch".into()))?;
                    img.save(path)?;
                }
                c => return Err(IoError::Format(format!("unsupported channel count {c}"))),
            }
            Ok(())
        }
    }
}

/// Reads one frame, dispatching on the file extension.
pub fn load_frame(path: &Path) -> Result<Frame, IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default();
    match FrameFormat::from_extension(ext) {
        Some(FrameFormat::Pgm) => decode_pgm(&fs::read(path)?),
        Some(FrameFormat::Png) => {
            let img = image::open(path)?;
            match img {
                image::DynamicImage::ImageLuma8(g) => Ok(Frame::new(
                    g.width() as usize,
                    g.height() as usize,
                    1,
                    g.into_raw(),
                )),
                other => {
                    let rgb = other.into_rgb8();
                    Ok(Frame::new(
                        rgb.width() as usize,
                        rgb.height() as usize,
                        3,
                        rgb.into_raw(),
                    ))
                }
            }
        }
        None => Err(IoError::Format(format!(
            "unrecognized frame extension {ext:?}"
        ))),
    }
}

/// Writes a numbered frame sequence into `dir` (created if needed),
/// returning the written paths in order.
pub fn save_frames(
    dir: &Path,
    frames: &[Frame],
    format: FrameFormat,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i, format));
        save_frame(&path, frame, format)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Loads every recognized frame file in `dir`, ordered by the number
/// embedded in the name. Indices must be contiguous from zero.
pub fn load_frames(dir: &Path) -> Result<Vec<Frame>, IoError> {
    let mut entries: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        if FrameFormat::from_extension(ext).is_none() {
            continue;
        }
        let Some(num) = stem.strip_prefix("frame_") else {
            continue;
        };
        let index: usize = num
            .parse()
            .map_err(|_| IoError::Format(format!("bad frame number in {stem:?}")))?;
        entries.push((index, path));
    }
    entries.sort_by_key(|(i, _)| *i);
    for (expected, (actual, path)) in entries.iter().enumerate() {
        if *actual != expected {
            return Err(IoError::Format(format!(
                "frame indices not contiguous: expected {expected}, found {actual} ({})",
                path.display()
            )));
        }
    }
    entries.iter().map(|(_, p)| load_frame(p)).collect()
}

/// Writes a trajectory as CSV with header `t,pose_0,...,pose_{D-1}`.
pub fn write_pose_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let dim = traj.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("pose_{i}")));
    w.write_record(&header)?;
    for (state, &t) in traj.states.iter().zip(&traj.timestamps) {
        let mut row = vec![format_float(t)];
        row.extend(state.values.iter().map(|&v| format_float(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Round-trippable float formatting: shortest representation that parses
/// back to the same f64.
fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains(['.', 'e', 'n', 'i']) {
        s.push_str(".0");
    }
    s
}

/// Reads a pose CSV written by [`write_pose_csv`].
pub fn read_pose_csv(path: &Path) -> Result<Trajectory, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.is_empty() || &headers[0] != "t" {
        return Err(IoError::Format("pose CSV must start with column `t`".into()));
    }
    for (i, name) in headers.iter().skip(1).enumerate() {
        let expected = format!("pose_{i}");
        if name != expected {
            return Err(IoError::Format(format!(
                "pose CSV column {} is {name:?}, expected {expected:?}",
                i + 1
            )));
        }
    }
    let dim = headers.len() - 1;
    let mut states = Vec::new();
    let mut timestamps = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != dim + 1 {
            return Err(IoError::Format(format!(
                "pose CSV row has {} fields, expected {}",
                record.len(),
                dim + 1
            )));
        }
        let parse = |s: &str| -> Result<f64, IoError> {
            s.trim()
                .parse()
                .map_err(|_| IoError::Format(format!("bad float {s:?} in pose CSV")))
        };
        timestamps.push(parse(&record[0])?);
        states.push(PoseState::new(
            record
                .iter()
                .skip(1)
                .map(parse)
                .collect::<Result<_, _>>()?,
        ));
    }
    Ok(Trajectory { states, timestamps })
}

/// Episode manifest: where the frames and poses of one episode live.
/// Paths are relative to the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub id: String,
    pub description: String,
    pub fps: f64,
    pub frame_dir: String,
    pub pose_csv: String,
}

/// Writes an episode under `dir` as `manifest.json` + `frames/` + `poses.csv`.
/// Returns the manifest path.
pub fn save_episode(dir: &Path, episode: &Episode, format: FrameFormat) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir)?;
    save_frames(&dir.join("frames"), &episode.frames, format)?;
    write_pose_csv(&dir.join("poses.csv"), &episode.trajectory)?;
    let manifest = EpisodeManifest {
        id: episode.id.clone(),
        description: episode.description.clone(),
        fps: episode.fps,
        frame_dir: "frames".into(),
        pose_csv: "poses.csv".into(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads an episode from its manifest file.
pub fn load_episode(manifest_path: &Path) -> Result<Episode, IoError> {
    let manifest: EpisodeManifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let frames = load_frames(&base.join(&manifest.frame_dir))?;
    let trajectory = read_pose_csv(&base.join(&manifest.pose_csv))?;
    if frames.len() != trajectory.len() {
        return Err(IoError::Format(format!(
            "episode {:?}: {} frames but {} pose rows",
            manifest.id,
            frames.len(),
            trajectory.len()
        )));
    }
    Ok(Episode {
        id: manifest.id,
        description: manifest.description,
        frames,
        trajectory,
        fps: manifest.fps,
    })
}

/// One entry in a dataset index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    /// Manifest path relative to the index file.
    pub manifest: String,
    /// Name of the task script the episode was generated from.
    pub script: String,
}

/// Dataset index: the episodes of a generated dataset, in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub episodes: Vec<DatasetEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Per-entry load results: failures stay attached to their entries.
pub type DatasetLoad = Vec<(DatasetEntry, Result<Episode, IoError>)>;

/// Loads every episode listed in a dataset index, in index order.
/// Individual failures are returned per episode so callers can decide
/// whether partial data is fatal.
pub fn load_dataset(index_path: &Path) -> Result<DatasetLoad, IoError> {
    let index: DatasetIndex = read_json(index_path)?;
    let base = index_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(index
        .episodes
        .into_iter()
        .map(|entry| {
            let episode = load_episode(&base.join(&entry.manifest));
            (entry, episode)
        })
        .collect())
}

/// Keyframe extraction output for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub episode_id: String,
    pub epsilon: f64,
    pub indices: Vec<usize>,
    /// False when the ε search could not hit the requested count exactly.
    pub achieved_flag: bool,
}

/// Sidecar describing a reconstructed video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSidecar {
    pub keyframe_positions: Vec<usize>,
    pub gaps: Vec<usize>,
    pub interpolator: String,
}

/// Reads a JSON file into any deserializable type.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Pretty-prints a value as JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes a file atomically: temp file in the same directory, then rename.
/// Readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}
