mod commands;
mod error;
mod logx;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, EXIT_CONFIG};
use logx::Log;

#[derive(Parser, Debug)]
#[command(
    name = "keyframe-pipeline",
    version,
    about = "Keyframe-factorized video reconstruction: dataset generation, \
             keyframe extraction, gap estimation, reconstruction, and benchmarks."
)]
struct Cli {
    /// Worker threads for episode-parallel work (0 = all cores).
    /// KEYFRAME_PIPELINE_JOBS is used when the flag is absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Emit line-delimited JSON logs on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a built-in suite or a script directory.
    SynthGen(commands::synth_gen::Args),
    /// Extract motion-aware keyframes from every episode of a dataset.
    Extract(commands::extract::Args),
    /// Train a gap estimator on extracted keyframe pairs.
    GapTrain(commands::gap::TrainArgs),
    /// Evaluate a trained gap estimator (RMSE in frames).
    GapEval(commands::gap::EvalArgs),
    /// Reconstruct every episode under one pipeline configuration.
    Run(commands::run::Args),
    /// Compare several configurations on one dataset.
    Compare(commands::compare::Args),
    /// Benchmark a configuration against the frame-to-frame baseline.
    Bench(commands::bench::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are exit 1 per the scripting contract;
            // --help/--version are successes.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let log = Log::new(cli.log_json);
    let jobs = cli.jobs.or_else(jobs_from_env).unwrap_or(0);

    let result = keyframe_core::exec::install(jobs, || dispatch(cli.command, log));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log.error("command_failed", fields!(error = e));
            ExitCode::from(e.exit_code())
        }
    }
}

fn jobs_from_env() -> Option<usize> {
    std::env::var("KEYFRAME_PIPELINE_JOBS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn dispatch(command: Command, log: Log) -> Result<(), CliError> {
    match command {
        Command::SynthGen(args) => commands::synth_gen::run(args, log),
        Command::Extract(args) => commands::extract::run(args, log),
        Command::GapTrain(args) => commands::gap::train(args, log),
        Command::GapEval(args) => commands::gap::eval(args, log),
        Command::Run(args) => commands::run::run(args, log),
        Command::Compare(args) => commands::compare::run(args, log),
        Command::Bench(args) => commands::bench::run(args, log),
    }
}
