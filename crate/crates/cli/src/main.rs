use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rib_cli::{run, CliError, Command, ExperimentSpec};

/// Recognizable-information-bottleneck experiments.
#[derive(Debug, Parser)]
#[command(name = "rib", version)]
struct Args {
    /// Study to run.
    #[arg(value_enum)]
    command: Command,
    /// Experiment spec (JSON). Defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the spec and $RIB_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent independent runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Only validate the spec and print diagnostics.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> Result<bool, CliError> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(c) = spec.command {
        if c != args.command {
            eprintln!("note: spec names `{c}`, running `{}`", args.command);
        }
    }
    spec.command = Some(args.command);
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        spec.jobs = jobs;
    }
    if args.check {
        let diagnostics = spec.validate();
        for d in &diagnostics {
            println!("{d}");
        }
        return Ok(diagnostics.is_empty());
    }
    let out = spec.resolve_out_dir(args.out.as_deref());
    let outcome = run(&spec, &out)?;
    let m = &outcome.manifest;
    for c in &m.checks {
        let tag = if c.pass { "pass" } else if c.hard { "FAIL" } else { "warn" };
        println!("[{tag}] {}: {}", c.name, c.detail);
    }
    if let Some(e) = &m.error {
        eprintln!("error: {e}");
    }
    println!("{} files written to {} ({:?})", m.files.len(), outcome.dir.display(), m.status);
    Ok(outcome.success())
}
