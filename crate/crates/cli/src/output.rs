//! Artifact directory: data CSVs, the summary table, the solve log, the
//! manifest and a plot script.
//!
//! Data files and the summary contain no timing, so they are byte-identical
//! across reruns of the same configuration. Wall-clock values go to
//! `solve_log.csv` only, which the manifest lists but does not hash.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fiberheat::solver::SolveReport;
use serde::Serialize;

use crate::config::{hex_digest, ExperimentConfig};
use crate::error::CliError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LOG_FILE: &str = "solve_log.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub quantity: String,
    pub value: f64,
    /// Human-readable expectation such as `>= 1.9`; empty for plain reports.
    pub expected: String,
    pub status: Status,
}

/// Collected results of one run, returned to callers of the library.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub files: Vec<String>,
    pub invariant_failures: Vec<String>,
}

impl RunSummary {
    pub fn get(&self, quantity: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    pub fn value(&self, quantity: &str) -> Option<f64> {
        self.get(quantity).map(|r| r.value)
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a SummaryRow> + 'a {
        self.rows.iter().filter(move |r| r.quantity.starts_with(prefix))
    }
}

pub struct Artifacts {
    dir: PathBuf,
    summary: RunSummary,
    log: Vec<SolveReport>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output_dir: {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            summary: RunSummary::default(),
            log: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a CSV data file and records it in the manifest.
    pub fn write_csv<I, S>(&mut self, name: &str, header: &str, rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{}", row.as_ref())?;
        }
        w.flush()?;
        self.register(name);
        Ok(())
    }

    /// Records a data file written by other code.
    pub fn register(&mut self, name: &str) {
        if !self.summary.files.iter().any(|f| f == name) {
            self.summary.files.push(name.to_string());
        }
    }

    pub fn report(&mut self, quantity: impl Into<String>, value: f64) {
        self.push(quantity.into(), value, String::new(), Status::Info);
    }

    pub fn check(&mut self, quantity: impl Into<String>, value: f64, expected: impl Into<String>, ok: bool) {
        self.push(quantity.into(), value, expected.into(), Status::from_bool(ok));
    }

    /// A check whose failure makes the run exit with the invariant code.
    pub fn invariant(&mut self, quantity: impl Into<String>, value: f64, expected: impl Into<String>, ok: bool) {
        let quantity = quantity.into();
        let expected = expected.into();
        if !ok {
            self.summary
                .invariant_failures
                .push(format!("{quantity} = {value:e} (expected {expected})"));
        }
        self.push(quantity, value, expected, Status::from_bool(ok));
    }

    fn push(&mut self, quantity: String, value: f64, expected: String, status: Status) {
        self.summary.rows.push(SummaryRow {
            quantity,
            value,
            expected,
            status,
        });
    }

    pub fn log_solves(&mut self, reports: impl IntoIterator<Item = SolveReport>) {
        self.log.extend(reports);
    }

    /// Writes the summary, the solve log, the plot script and the manifest.
    pub fn finish(mut self, cfg: &ExperimentConfig, plot_script: &str) -> Result<RunSummary, CliError> {
        let rows: Vec<String> = self
            .summary
            .rows
            .iter()
            .map(|r| format!("{},{:.9e},{},{}", r.quantity, r.value, r.expected, r.status.name()))
            .collect();
        self.write_csv(SUMMARY_FILE, "quantity,value,expected,status", rows)?;

        let mut w = BufWriter::new(File::create(self.path(LOG_FILE))?);
        writeln!(w, "{}", SolveReport::CSV_HEADER)?;
        for r in &self.log {
            writeln!(w, "{}", r.csv_row())?;
        }
        w.flush()?;

        let script = format!("plot_{}.py", cfg.resolved.experiment.name().replace('-', "_"));
        fs::write(self.path(&script), plot_script)?;
        self.register(&script);

        let files = self
            .summary
            .files
            .iter()
            .map(|name| {
                let bytes = fs::read(self.path(name))?;
                Ok(ManifestFile {
                    name: name.clone(),
                    sha256: hex_digest(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let canonical = cfg.canonical();
        let manifest = Manifest {
            experiment: cfg.resolved.experiment.name().to_string(),
            config_sha256: hex_digest(canonical.as_bytes()),
            source_sha256: cfg.source_sha256.clone(),
            log: LOG_FILE.to_string(),
            versions: Versions {
                fiberheat: fiberheat::VERSION.to_string(),
                fiberheat_cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: canonical,
            files,
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        fs::write(self.path(MANIFEST_FILE), text)?;
        Ok(self.summary)
    }
}

#[derive(Serialize)]
struct Manifest {
    experiment: String,
    config_sha256: String,
    source_sha256: String,
    log: String,
    versions: Versions,
    config: String,
    files: Vec<ManifestFile>,
}

#[derive(Serialize)]
struct Versions {
    fiberheat: String,
    #[serde(rename = "fiberheat-cli")]
    fiberheat_cli: String,
}

#[derive(Serialize)]
struct ManifestFile {
    name: String,
    sha256: String,
    bytes: u64,
}
