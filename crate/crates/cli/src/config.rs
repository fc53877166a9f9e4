//! Experiment configuration: `key = value` files, flag overrides and
//! validation against the library's own constraints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use treeloc::green::SpectralPoint;
use treeloc::moments::validate_exponent;
use treeloc::operator::{DisorderSpec, Distribution, LaplacianKind};
use treeloc::tree::TreeParams;

use crate::CliError;

/// Every key the configuration understands.
pub const KEYS: &[&str] = &[
    "k",
    "gamma",
    "radius",
    "laplacian",
    "distribution",
    "dist_params",
    "lambda",
    "s",
    "energy",
    "eta",
    "samples",
    "seed",
    "source",
    "targets",
    "l0",
    "output",
    "csv",
    "workers",
    "length",
    "region_size",
    "etas",
    "pairs",
    "x",
    "y",
    "x1",
    "v",
    "depth_x",
    "apex",
    "depth_v",
    "realization",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "ids")]
pub enum TargetSelection {
    /// Descending leftmost ray from the source to the edge of the ball.
    Ray,
    Explicit(Vec<usize>),
}

/// Fully resolved configuration. Fields that cannot change a result
/// (destinations and worker count) are left out of serialized records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub k: u32,
    pub gamma: f64,
    pub radius: u64,
    pub laplacian: LaplacianKind,
    pub distribution: Distribution,
    pub lambda: f64,
    pub s: f64,
    pub energy: f64,
    pub eta: f64,
    pub samples: usize,
    pub seed: u64,
    pub source: usize,
    pub targets: TargetSelection,
    pub l0: u64,
    pub length: usize,
    pub region_size: usize,
    pub etas: Vec<f64>,
    pub pairs: usize,
    pub x: usize,
    pub y: usize,
    pub x1: Option<usize>,
    pub v: Option<usize>,
    pub depth_x: Option<u64>,
    pub apex: Option<u64>,
    pub depth_v: Option<u64>,
    pub realization: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            gamma: 2.0,
            radius: 20,
            laplacian: LaplacianKind::Adjacency,
            distribution: Distribution::default(),
            lambda: 1.0,
            s: 0.5,
            energy: 0.0,
            eta: 1e-3,
            samples: 1000,
            seed: 0,
            source: 0,
            targets: TargetSelection::Ray,
            l0: 5,
            length: 60,
            region_size: 20,
            etas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            pairs: 5,
            x: 0,
            y: 0,
            x1: None,
            v: None,
            depth_x: None,
            apex: None,
            depth_v: None,
            realization: 0,
            output: None,
            csv: None,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

impl ExperimentConfig {
    pub fn tree(&self) -> TreeParams {
        TreeParams { k: self.k, gamma: self.gamma, radius: self.radius }
    }

    pub fn disorder(&self) -> DisorderSpec {
        DisorderSpec { distribution: self.distribution, lambda: self.lambda, master_seed: self.seed }
    }

    pub fn spectral_point(&self) -> SpectralPoint {
        SpectralPoint { energy: self.energy, eta: self.eta }
    }

    /// Re-checks every constraint the library imposes.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tree().validate()?;
        self.disorder().validate()?;
        self.spectral_point().validate()?;
        validate_exponent(self.s)?;
        let positive = [
            ("samples", self.samples),
            ("workers", self.workers),
            ("region_size", self.region_size),
            ("pairs", self.pairs),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(CliError::Config(format!("{key} must be >= 1")));
            }
        }
        if self.l0 == 0 {
            return Err(CliError::Config("l0 must be >= 1".into()));
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(CliError::Config("etas must be a non-empty list of positive values".into()));
        }
        if self.etas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("etas must be strictly descending".into()));
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment. Later lines win.
pub fn parse_file_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)));
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("line {}: unknown key {key:?}", n + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_file_text(&text)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Resolves file entries, then flag entries (which override the file), on
/// top of the defaults. Unknown keys are rejected.
pub fn resolve(file: &BTreeMap<String, String>, flags: &BTreeMap<String, String>) -> Result<ExperimentConfig, CliError> {
    let mut merged = file.clone();
    for (k, v) in flags {
        merged.insert(k.clone(), v.clone());
    }
    let mut cfg = ExperimentConfig::default();
    let mut dist_name: Option<String> = None;
    let mut dist_params: Vec<f64> = Vec::new();
    for (key, value) in &merged {
        let v = value.as_str();
        match key.as_str() {
            "k" => cfg.k = parse(key, v)?,
            "gamma" => cfg.gamma = parse(key, v)?,
            "radius" => cfg.radius = parse(key, v)?,
            "laplacian" => cfg.laplacian = v.parse()?,
            "distribution" => dist_name = Some(v.to_string()),
            "dist_params" => dist_params = parse_list(key, v)?,
            "lambda" => cfg.lambda = parse(key, v)?,
            "s" => cfg.s = parse(key, v)?,
            "energy" => cfg.energy = parse(key, v)?,
            "eta" => cfg.eta = parse(key, v)?,
            "samples" => cfg.samples = parse(key, v)?,
            "seed" => cfg.seed = parse(key, v)?,
            "source" => cfg.source = parse(key, v)?,
            "targets" => {
                cfg.targets = if v.trim().eq_ignore_ascii_case("ray") {
                    TargetSelection::Ray
                } else {
                    let ids = parse_list(key, v)?;
                    if ids.is_empty() {
                        return Err(CliError::Config("targets: expected `ray` or a list of ids".into()));
                    }
                    TargetSelection::Explicit(ids)
                }
            }
            "l0" => cfg.l0 = parse(key, v)?,
            "output" => cfg.output = Some(PathBuf::from(v)),
            "csv" => cfg.csv = Some(PathBuf::from(v)),
            "workers" => cfg.workers = parse(key, v)?,
            "length" => cfg.length = parse(key, v)?,
            "region_size" => cfg.region_size = parse(key, v)?,
            "etas" => cfg.etas = parse_list(key, v)?,
            "pairs" => cfg.pairs = parse(key, v)?,
            "x" => cfg.x = parse(key, v)?,
            "y" => cfg.y = parse(key, v)?,
            "x1" => cfg.x1 = Some(parse(key, v)?),
            "v" => cfg.v = Some(parse(key, v)?),
            "depth_x" => cfg.depth_x = Some(parse(key, v)?),
            "apex" => cfg.apex = Some(parse(key, v)?),
            "depth_v" => cfg.depth_v = Some(parse(key, v)?),
            "realization" => cfg.realization = parse(key, v)?,
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
    }
    if let Some(name) = dist_name {
        cfg.distribution = Distribution::from_name(&name, &dist_params)?;
    } else if !dist_params.is_empty() {
        cfg.distribution = Distribution::from_name("uniform", &dist_params)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
