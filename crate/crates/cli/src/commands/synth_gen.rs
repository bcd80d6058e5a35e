use std::path::PathBuf;

use serde::Serialize;

use keyframe_core::core::DEFAULT_FPS;
use keyframe_core::exec;
use keyframe_core::io::{
    read_json, save_episode, write_json, DatasetEntry, DatasetIndex, FrameFormat,
};
use keyframe_core::synthworld::{simulate_task, suites, ArmSpec, SynthError, TaskScript};

use crate::error::CliError;
use crate::fields;
use crate::logx::Log;
use crate::manifest::{write_run_manifest, RunManifest};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Built-in suite: pick-place, cv, or mixed.
    #[arg(long, conflicts_with = "script_dir")]
    pub suite: Option<String>,
    /// Directory of task-script JSON files.
    #[arg(long)]
    pub script_dir: Option<PathBuf>,
    /// Episodes to generate (suite mode).
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Frames per episode, N+1 (suite mode, minimum 16).
    #[arg(long, default_value_t = 81)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Frame file format: pgm or png.
    #[arg(long, default_value = "pgm")]
    pub format: String,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    pub fps: f64,
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    episodes: usize,
    failed: usize,
}

type Simulated = Result<(usize, TaskScript, keyframe_core::core::Episode), (String, SynthError)>;

pub fn run(args: Args, log: Log) -> Result<(), CliError> {
    let format = FrameFormat::from_extension(&args.format)
        .ok_or_else(|| CliError::Config(format!("unknown frame format {:?}", args.format)))?;
    let spec = ArmSpec::default();

    let scripts: Vec<TaskScript> = match (&args.suite, &args.script_dir) {
        (Some(name), None) => {
            let kind: suites::SuiteKind = name.parse().map_err(CliError::Config)?;
            suites::generate(kind, args.count, args.frames, args.seed)?
        }
        (None, Some(dir)) => load_scripts(dir, log)?,
        _ => {
            return Err(CliError::Config(
                "pass exactly one of --suite / --script-dir".into(),
            ))
        }
    };

    let manifest = RunManifest::new(
        "synth-gen",
        None,
        args.script_dir.as_deref(),
        &args.out,
        args.seed,
    );
    write_run_manifest(&args.out, &manifest)?;

    let results: Vec<Simulated> =
        exec::par_map(scripts.into_iter().enumerate().collect(), |(i, script)| {
            match simulate_task(&script, &spec, args.fps, args.seed) {
                Ok(episode) => Ok((i, script, episode)),
                Err(e) => Err((script.name.clone(), e)),
            }
        });

    let mut entries = Vec::new();
    let mut failed = 0usize;
    for result in results {
        match result {
            Ok((i, script, episode)) => {
                let rel_dir = format!("episodes/ep-{i:03}");
                let dir = args.out.join(&rel_dir);
                save_episode(&dir, &episode, format)?;
                write_json(&dir.join("scene.json"), &script)?;
                entries.push(DatasetEntry {
                    id: episode.id.clone(),
                    manifest: format!("{rel_dir}/manifest.json"),
                    script: script.name.clone(),
                });
            }
            Err((name, e)) => {
                failed += 1;
                log.warn("simulation_failed", fields!(script = name, error = e));
            }
        }
    }

    let episodes = entries.len();
    write_json(&args.out.join("index.json"), &DatasetIndex { episodes: entries })?;
    write_json(&args.out.join("synth_summary.json"), &SynthSummary { episodes, failed })?;
    log.info(
        "dataset_written",
        fields!(episodes = episodes, failed = failed, out = args.out.display()),
    );
    super::common::finish(failed, "script(s)")
}

fn load_scripts(dir: &std::path::Path, log: Log) -> Result<Vec<TaskScript>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut scripts = Vec::with_capacity(paths.len());
    for path in paths {
        match read_json::<TaskScript>(&path) {
            Ok(script) => scripts.push(script),
            Err(e) => {
                log.warn("script_unreadable", fields!(path = path.display(), error = e));
            }
        }
    }
    if scripts.is_empty() {
        return Err(CliError::Data(format!(
            "no readable task scripts in {}",
            dir.display()
        )));
    }
    Ok(scripts)
}
