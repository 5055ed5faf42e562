//! Command-line entry point: loads a configuration, applies flag
//! overrides, runs the experiment, and writes the CSV, summary, and
//! artifacts next to the configured output prefix.

use clap::Parser;
use polarsw_cli::config::parse_config;
use polarsw_cli::run::run;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "polarsw",
    about = "Seeded batch experiments for polarized source and channel codes"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count; overrides the configuration.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; overrides the configuration (0 = runtime default).
    #[arg(long)]
    workers: Option<usize>,
    /// Output path prefix; overrides the configuration.
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("{message}");
            ExitCode::from(code)
        }
    }
}

fn execute(cli: Cli) -> Result<(), (u8, String)> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| (2, format!("config: cannot read {}: {e}", cli.config.display())))?;
    let mut config = parse_config(&text).map_err(|e| (2, e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }

    let output = run(&config).map_err(|e| (e.exit_code() as u8, e.to_string()))?;
    let csv_path = format!("{}.csv", config.out);
    let summary_path = format!("{}.txt", config.out);
    let summary = output.report.summary();
    std::fs::write(&csv_path, output.report.csv())
        .map_err(|e| (1, format!("cannot write {csv_path}: {e}")))?;
    std::fs::write(&summary_path, &summary)
        .map_err(|e| (1, format!("cannot write {summary_path}: {e}")))?;
    for (path, bytes) in &output.artifacts {
        std::fs::write(path, bytes).map_err(|e| (1, format!("cannot write {path}: {e}")))?;
    }
    print!("{summary}");
    Ok(())
}
