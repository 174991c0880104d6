use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlprox::commands::{
    cmd_check, cmd_gallery_describe, cmd_gallery_list, cmd_oracle, cmd_run, CheckArgs, RunArgs,
};
use mlprox::spec::Overrides;

#[derive(Parser)]
#[command(
    name = "mlprox",
    version,
    about = "Multilevel proximal-gradient solver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the iteration on a problem file; writes a trace CSV and metadata JSON.
    Run {
        spec: PathBuf,
        #[arg(long)]
        iters: Option<f64>,
        /// Stop once the step norm falls to this value.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        trace_every: Option<usize>,
        /// Trace CSV path.
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        /// Metadata JSON path (defaults to the trace path with .meta.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve a problem file exactly and write the oracle JSON.
    Oracle {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace against an oracle and the convergence bounds.
    Check {
        trace: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// The problem file the trace was produced from.
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Comma-separated checks that decide the exit code.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Tolerance on the final distance to the predicted limit.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Seed for the regularity sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e2)]
        fit_min: f64,
        #[arg(long, default_value_t = 1e4)]
        fit_max: f64,
        /// Largest accepted slope of the bottom-objective gap.
        #[arg(long, default_value_t = -0.9, allow_hyphen_values = true)]
        max_slope: f64,
    },
    /// Built-in problems.
    Gallery {
        #[command(subcommand)]
        cmd: GalleryCmd,
    },
}

#[derive(Subcommand)]
enum GalleryCmd {
    List,
    Describe { name: String },
}

fn count(flag: &str, v: Option<f64>) -> Result<Option<usize>, mlprox::CliError> {
    match v {
        None => Ok(None),
        Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= 1e12 => Ok(Some(v as usize)),
        Some(v) => Err(mlprox::CliError::Validation(format!(
            "--{flag}: must be a positive integer, got {v}"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            spec,
            iters,
            tol,
            trace_every,
            out,
            report,
        } => count("iters", iters).and_then(|iters| {
            let args = RunArgs {
                overrides: Overrides {
                    iters,
                    tol,
                    trace_every,
                },
                out: Some(out),
                report,
            };
            cmd_run(&spec, &args)
        }),
        Cmd::Oracle { spec, out } => cmd_oracle(&spec, out.as_deref()),
        Cmd::Check {
            trace,
            oracle,
            problem,
            report,
            checks,
            tol,
            seed,
            fit_min,
            fit_max,
            max_slope,
        } => cmd_check(
            &trace,
            &CheckArgs {
                oracle,
                problem,
                report,
                checks,
                tol,
                seed,
                fit_range: (fit_min, fit_max),
                max_slope,
            },
        ),
        Cmd::Gallery {
            cmd: GalleryCmd::List,
        } => cmd_gallery_list(),
        Cmd::Gallery {
            cmd: GalleryCmd::Describe { name },
        } => cmd_gallery_describe(&name),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
