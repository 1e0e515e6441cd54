use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tandem", version, about = "Hierarchical unsupervised classification with mirroring networks and Forgy clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labelled synthetic corpus as CSV.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one hierarchy and save it with its mirror reports.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the class path of every row of a CSV file.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run repeated ab-initio trials and write the aggregate report.
    EvalTrials {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> tandem_cli::Result<()> {
    match command {
        Command::Generate { spec, out, seed } => {
            let ds = tandem_cli::generate(&spec, &out, seed)?;
            eprintln!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Train { config, data, out, seed } => {
            let root = tandem_cli::train(&config, &data, &out, seed)?;
            eprintln!(
                "trained {} nodes (root mirrored {:.3} after {} epochs); wrote {}",
                root.nodes().len(),
                root.mirror_report.mirrored_fraction,
                root.mirror_report.epochs_run,
                out.display()
            );
        }
        Command::Classify { model, data } => {
            print!("{}", tandem_cli::classify(&model, &data)?);
        }
        Command::EvalTrials { config, trials, seed, out } => {
            let report = tandem_cli::eval_trials(&config, trials, seed, &out)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
