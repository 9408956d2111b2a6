use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stabilyze::config::load_config;
use stabilyze::report::{run, Command, RunError};

/// Stability classification of damped Timoshenko and wave-heat systems.
#[derive(Parser)]
#[command(name = "stabilyze", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify the single parameter point of the configuration.
    Classify(RunArgs),
    /// Classify every point of the sweep grid.
    Sweep(RunArgs),
    /// Growth of the witness sequences along the spectrum.
    Witness(RunArgs),
    /// Modal trajectories and Lyapunov functionals.
    Simulate(RunArgs),
    /// Decay curve and fitted exponential rates.
    Decay(RunArgs),
    /// Resolvent margin along the imaginary axis.
    ResolventScan(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[output] workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip points already completed in the output directory.
    #[arg(long)]
    resume: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (cmd, args) = match cli.command {
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Witness(a) => (Command::Witness, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Decay(a) => (Command::Decay, a),
        Cmd::ResolventScan(a) => (Command::ResolventScan, a),
    };
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    if args.workers.is_some() {
        cfg.output.workers = args.workers;
    }
    cfg.output.resume |= args.resume;

    let summary = match run(cmd, &cfg) {
        Ok(s) => s,
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cmd == Command::Classify {
        // Echo the single report row as `column: value` lines.
        let path = cfg.output.dir.join(cmd.summary_file());
        if let Ok(mut r) = csv::Reader::from_path(&path) {
            let header = r.headers().cloned().unwrap_or_default();
            for rec in r.records().flatten() {
                for (k, v) in header.iter().zip(rec.iter()) {
                    println!("{k}: {v}");
                }
            }
        }
    }
    eprintln!(
        "{}: {} computed, {} resumed, {} failed; output in {}",
        cfg.output.dir.join(cmd.summary_file()).display(),
        summary.computed,
        summary.skipped,
        summary.failed,
        cfg.output.dir.display()
    );
    if summary.failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
