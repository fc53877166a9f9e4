//! JSON-lines records, optional CSV summaries and the metadata sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Directory used for results when no `output` path is configured.
pub const OUTPUT_DIR_ENV: &str = "TREELOC_OUTPUT_DIR";

#[derive(Debug, Serialize)]
struct Record<'a> {
    record_type: &'a str,
    config: &'a ExperimentConfig,
    payload: &'a Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<(String, Value)>,
    pub csv: Option<Csv>,
    /// Set when a verification step found a violated property.
    pub verification_failed: bool,
}

impl Outcome {
    pub fn push(&mut self, record_type: &str, payload: impl Serialize) -> Result<(), CliError> {
        let value = serde_json::to_value(payload).map_err(|e| CliError::Io(e.to_string()))?;
        self.records.push((record_type.to_string(), value));
        Ok(())
    }
}

/// Renders records as JSON lines. Output is a pure function of the config
/// and the records.
pub fn render_records(config: &ExperimentConfig, records: &[(String, Value)]) -> Result<String, CliError> {
    let mut out = String::new();
    for (record_type, payload) in records {
        let line = serde_json::to_string(&Record { record_type, config, payload })
            .map_err(|e| CliError::Io(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn destination(config: &ExperimentConfig, command: &str) -> Option<PathBuf> {
    if let Some(p) = &config.output {
        return Some(p.clone());
    }
    std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(|d| PathBuf::from(d).join(format!("{command}.jsonl")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Sidecar path for run metadata: `<output>.meta.json`.
pub fn meta_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes records to the configured destination (stdout when there is
/// none) and, for file destinations, a metadata sidecar with timing and
/// worker count.
pub fn emit(config: &ExperimentConfig, command: &str, outcome: &Outcome, started: SystemTime, elapsed: Duration) -> Result<(), CliError> {
    let body = render_records(config, &outcome.records)?;
    match destination(config, command) {
        Some(path) => {
            write_file(&path, &body)?;
            let meta = serde_json::json!({
                "command": command,
                "started_unix_s": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
                "elapsed_s": elapsed.as_secs_f64(),
                "workers": config.workers,
                "records": outcome.records.len(),
                "version": env!("CARGO_PKG_VERSION"),
            });
            write_file(&meta_path(&path), &format!("{meta:#}\n"))?;
            eprintln!("{command}: {} records -> {}", outcome.records.len(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    if let (Some(path), Some(csv)) = (&config.csv, &outcome.csv) {
        write_file(path, &csv.render())?;
    }
    Ok(())
}
