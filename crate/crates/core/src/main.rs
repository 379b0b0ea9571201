use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bsl_core::experiment::run_file;
use bsl_core::plot::{plot_file, PlotKind};
use bsl_core::BslError;

#[derive(Parser)]
#[command(name = "bsl", version, about = "Toeplitz spectra, Berezin samples and composition-operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config; prints the report path.
    Run {
        config: PathBuf,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Plot the first two columns of a CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "loglog")]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &BslError) -> u8 {
    match e {
        BslError::Schema(_) | BslError::Json(_) | BslError::Csv(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, threads, out } => {
            if let Some(k) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            run_file(&config, &out).map(|(_, path)| println!("{}", path.display()))
        }
        Command::Plot { csv, kind, out } => plot_file(&csv, kind, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
