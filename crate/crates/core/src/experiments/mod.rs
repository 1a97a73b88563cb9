//! Desk-scale reproductions of the clock figures, written as CSV.
//!
//! Every run writes into its own directory: `report.txt` with the summary
//! metrics and one CSV per data set. CSV content depends only on the config,
//! so reruns are byte-identical; only the runtime line of `report.txt` varies.

mod config;
mod figures;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};

pub use config::{Experiment, RunConfig};
pub use figures::disorder_deviation;

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    /// Every file written, `report.txt` last.
    pub files: Vec<PathBuf>,
    /// Named summary numbers in the order they were computed.
    pub metrics: Vec<(String, f64)>,
    pub runtime_seconds: f64,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("experiment = {}\n", self.experiment);
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for f in &self.files {
            if let Some(name) = f.file_name() {
                s.push_str(&format!("file = {}\n", name.to_string_lossy()));
            }
        }
        s.push_str(&format!("runtime_seconds = {:.3}\n", self.runtime_seconds));
        s
    }
}

/// Collects output files and metrics for one run.
pub(crate) struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
    metrics: Vec<(String, f64)>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            metrics: Vec::new(),
        })
    }

    pub(crate) fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    pub(crate) fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }
}

/// Runs the configured experiment and writes its files into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let mut out = Output::new(out_dir)?;
    match config.experiment {
        Experiment::Fig1 => figures::fig1(config, &mut out)?,
        Experiment::Fig2 => figures::fig2(config, &mut out)?,
        Experiment::Fig3 => figures::fig3(config, &mut out)?,
        Experiment::Fig4 => figures::fig4(config, &mut out)?,
        Experiment::Fig5 => figures::fig5(config, &mut out)?,
        Experiment::Fig6 => figures::fig6(config, &mut out)?,
        Experiment::GapScan => figures::gap_scan(config, &mut out)?,
        Experiment::Convergence => figures::convergence(config, &mut out)?,
    }
    let mut report = RunReport {
        experiment: config.experiment,
        out_dir: out.dir.clone(),
        files: out.files,
        metrics: out.metrics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    let path = report.out_dir.join("report.txt");
    report.files.push(path.clone());
    fs::write(&path, report.summary())?;
    Ok(report)
}

/// True for errors caused by the configuration rather than the numerics.
pub fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_))
}
