//! `treeloc` command-line front end.
//!
//! Every subcommand reads an optional `key = value` config file, applies
//! flag overrides, validates the result and writes JSON-lines records of
//! the form `{record_type, config, payload}`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::output::Outcome;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] treeloc::Error),
    #[error("{0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "treeloc", version, about = "Anderson model on stretched Bethe trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ball size, junction depths and the dimension table.
    Tree(ConfigArgs),
    /// One Green function entry G(x, y; E + i eta).
    Green(ConfigArgs),
    /// Fractional moments from a source to targets, with a decay fit.
    Moments(ConfigArgs),
    /// End-to-end moments of random segments of the integer line.
    Minami(ConfigArgs),
    /// Moment bounds on a random region as eta decreases.
    Probe(ConfigArgs),
    /// Pair decomposition of a path and its property report.
    Segment(ConfigArgs),
    /// Eigen-decomposition, participation ratios and level statistics.
    Spectrum(ConfigArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

/// Flags mirror the config-file keys; a flag beats the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub radius: Option<String>,
    /// adjacency | graph
    #[arg(long)]
    pub laplacian: Option<String>,
    /// uniform | gaussian | cauchy
    #[arg(long)]
    pub distribution: Option<String>,
    /// Two comma-separated parameters of the distribution.
    #[arg(long, allow_hyphen_values = true)]
    pub dist_params: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Fractional exponent in (0, 1).
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub energy: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub source: Option<String>,
    /// `ray` or a comma-separated list of vertex ids.
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long)]
    pub l0: Option<String>,
    /// JSON-lines destination; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub output: Option<String>,
    /// CSV summary destination.
    #[arg(long)]
    pub csv: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    /// Segment length for `minami`.
    #[arg(long)]
    pub length: Option<String>,
    #[arg(long)]
    pub region_size: Option<String>,
    /// Descending comma-separated eta values for `probe`.
    #[arg(long)]
    pub etas: Option<String>,
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub x1: Option<String>,
    #[arg(long)]
    pub v: Option<String>,
    #[arg(long)]
    pub depth_x: Option<String>,
    #[arg(long)]
    pub apex: Option<String>,
    #[arg(long)]
    pub depth_v: Option<String>,
    #[arg(long)]
    pub realization: Option<String>,
}

impl ConfigArgs {
    fn flag_map(&self) -> BTreeMap<String, String> {
        let entries = [
            ("k", &self.k),
            ("gamma", &self.gamma),
            ("radius", &self.radius),
            ("laplacian", &self.laplacian),
            ("distribution", &self.distribution),
            ("dist_params", &self.dist_params),
            ("lambda", &self.lambda),
            ("s", &self.s),
            ("energy", &self.energy),
            ("eta", &self.eta),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("source", &self.source),
            ("targets", &self.targets),
            ("l0", &self.l0),
            ("output", &self.output),
            ("csv", &self.csv),
            ("workers", &self.workers),
            ("length", &self.length),
            ("region_size", &self.region_size),
            ("etas", &self.etas),
            ("pairs", &self.pairs),
            ("x", &self.x),
            ("y", &self.y),
            ("x1", &self.x1),
            ("v", &self.v),
            ("depth_x", &self.depth_x),
            ("apex", &self.apex),
            ("depth_v", &self.depth_v),
            ("realization", &self.realization),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(p) => config::read_file(p)?,
            None => BTreeMap::new(),
        };
        config::resolve(&file, &self.flag_map())
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Smaller sample sizes; tolerances are unchanged.
    #[arg(long)]
    pub quick: bool,
    /// Run only these criteria (comma-separated ids).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

type Runner = fn(&ExperimentConfig) -> Result<Outcome, CliError>;

fn execute(command: &Command) -> Result<(ExperimentConfig, &'static str, Outcome), CliError> {
    let (args, name, f): (&ConfigArgs, &'static str, Runner) = match command {
        Command::Tree(a) => (a, "tree", commands::tree),
        Command::Green(a) => (a, "green", commands::green),
        Command::Moments(a) => (a, "moments", commands::moments),
        Command::Minami(a) => (a, "minami", commands::minami),
        Command::Probe(a) => (a, "probe", commands::probe),
        Command::Segment(a) => (a, "segment", commands::segment),
        Command::Spectrum(a) => (a, "spectrum", commands::spectrum),
        Command::Verify(v) => {
            let cfg = v.config.resolve()?;
            let ids: Vec<u8> = if v.only.is_empty() { (1..=10).collect() } else { v.only.clone() };
            if let Some(bad) = ids.iter().find(|&&i| !(1..=10).contains(&i)) {
                return Err(CliError::Config(format!("no criterion {bad} (1..=10)")));
            }
            let mut out = Outcome::default();
            for id in ids {
                let c = verify::run_criterion(id, v.quick);
                eprintln!("{}", c.line());
                out.verification_failed |= !c.passed;
                out.push("criterion", &c)?;
            }
            return Ok((cfg, "verify", out));
        }
    };
    let cfg = args.resolve()?;
    let out = f(&cfg)?;
    Ok((cfg, name, out))
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    let result = execute(&cli.command)
        .and_then(|(cfg, name, out)| output::emit(&cfg, name, &out, started, clock.elapsed()).map(|_| out));
    match result {
        Ok(out) if out.verification_failed => EXIT_VERIFY_FAILED,
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
