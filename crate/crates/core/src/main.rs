use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mispredict::harness::{run_to_dir, DataSource, ExperimentConfig};
use mispredict::Error;

#[derive(Parser)]
#[command(version, about = "Imputation and prediction-interval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv and manifest.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of Monte-Carlo iterates.
        #[arg(long)]
        iterates: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read at most this many data rows from the dataset.
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn load(path: &PathBuf) -> Result<(ExperimentConfig, String), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_path(path).map_err(|e| Failure::Config(e.to_string()))?;
    Ok((cfg, text))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let (cfg, _) = load(&config)?;
            println!(
                "ok: {} ({}), {} iterates",
                cfg.id,
                cfg.kind.name(),
                cfg.mc_iterates
            );
            Ok(())
        }
        Command::Run {
            config,
            seed,
            iterates,
            out,
            max_rows,
        } => {
            let (mut cfg, mut text) = load(&config)?;
            let mut overrides = Vec::new();
            if let Some(s) = seed {
                cfg.master_seed = s;
                overrides.push(format!("seed = {s}"));
            }
            if let Some(n) = iterates {
                cfg.mc_iterates = n;
                overrides.push(format!("iterates = {n}"));
            }
            if let Some(dir) = out {
                overrides.push(format!("out = {}", dir.display()));
                cfg.output_dir = dir;
            }
            if let Some(m) = max_rows {
                if let DataSource::Csv { options, .. } = &mut cfg.source {
                    options.max_rows = Some(m);
                }
                overrides.push(format!("max_rows = {m}"));
            }
            cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
            if !overrides.is_empty() {
                text.push_str("\n# command-line overrides\n");
                for o in overrides {
                    text.push_str(&format!("# {o}\n"));
                }
            }
            let results = run_to_dir(&cfg, Some(&text)).map_err(|e| match e {
                Error::Config(m) => Failure::Config(m),
                other => Failure::Runtime(other.to_string()),
            })?;
            println!("wrote {}", results.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
