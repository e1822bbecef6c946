use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use railvo::railcli::{cmd_evaluate, cmd_odometry, cmd_plot, cmd_simulate, metrics_text};
use railvo::{Error, ErrorKind};

/// Monocular rail odometry toolkit.
#[derive(Debug, Parser)]
#[command(name = "railvo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset from a simulation spec.
    Simulate {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the odometry pipeline over a dataset.
    Odometry {
        dataset: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a run with ground truth.
    Evaluate {
        run: PathBuf,
        truth: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Draw an SVG plot from a CSV file.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate { spec, output } => {
            let n = cmd_simulate(&spec, &output)?;
            println!("wrote {n} frames to {}", output.display());
        }
        Command::Odometry {
            dataset,
            config,
            output,
        } => {
            let s = cmd_odometry(&dataset, config.as_deref(), &output)?;
            println!(
                "{} frames, {} keyframe switches, {} tracking failures, {} tags applied",
                s.frames, s.keyframe_switches, s.tracking_failures, s.tags_applied
            );
            if s.tracking_failures > 0 {
                eprintln!("error: tracking failed on {} frames", s.tracking_failures);
                return Ok(3);
            }
        }
        Command::Evaluate { run, truth, output } => {
            let m = cmd_evaluate(&run, &truth, &output)?;
            print!("{}", metrics_text(&m));
        }
        Command::Plot { csv, kind, output } => cmd_plot(&csv, &kind, &output)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
