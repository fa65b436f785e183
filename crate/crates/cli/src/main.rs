use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipsplice_cli::{emit_plot_data, exit_code, run, Experiment, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "ipsplice", version, about = "Invasion percolation splicing experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config, or JSON when the name ends in .json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow invasion clusters and record their weight tails.
    Invade(RunArgs),
    /// Histogram of disjoint annulus crossings.
    Crossings(RunArgs),
    /// Four-arm probabilities over inner scales.
    Arms(RunArgs),
    /// Box-crossing curves, correlation lengths and p_n.
    Corrlen(RunArgs),
    /// Tranche resampling: mismatch, conditional variance, A-event stability.
    Splice(RunArgs),
    /// Quick oracle checks; exit status 2 when one fails.
    Verify(RunArgs),
    /// Gnuplot tables from a finished run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let (exp, args) = match cli.command {
        Command::Invade(a) => (Experiment::Invade, a),
        Command::Crossings(a) => (Experiment::Crossings, a),
        Command::Arms(a) => (Experiment::Arms, a),
        Command::Corrlen(a) => (Experiment::Corrlen, a),
        Command::Splice(a) => (Experiment::Splice, a),
        Command::Verify(a) => (Experiment::Verify, a),
        Command::Plot { run } => {
            return match emit_plot_data(&run) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = run(exp, args.config.as_deref(), args.out.as_deref());
    match &result {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            for f in &outcome.failures {
                eprintln!("check failed: {f}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
