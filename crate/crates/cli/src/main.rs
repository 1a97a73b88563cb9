use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stoclock_core::experiments::{self, Experiment, RunConfig};
use stoclock_core::Error;

/// Runs one clock experiment and writes its CSV files and report.
#[derive(Parser, Debug)]
#[command(name = "stoclock", version)]
struct Cli {
    /// fig1, fig2, fig3, fig4, fig5, fig6, gap_scan or convergence
    experiment: String,

    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set gamma=0.3`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(experiment, path)?,
        None => RunConfig::new(experiment),
    };
    for pair in &cli.overrides {
        cfg.apply_override(pair)?;
    }
    cfg.experiment = experiment;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = load(&cli).and_then(|cfg| experiments::run(&cfg, &cli.out));
    match result {
        Ok(report) => {
            print!("{}", report.summary());
            ExitCode::SUCCESS
        }
        Err(e) if experiments::is_config_error(&e) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
    }
}
