//! Resolved pipeline configuration.
//!
//! The on-disk form is a flat `key = value` file; `#` starts a comment.
//! Command-line flags are applied on top through the same [`PipelineConfig::set`].

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corrnet::WindowSpec;
use crate::error::{Error, Result};
use crate::ingest::MissingPolicy;
use crate::kuramoto::{PlateauDetector, SimulationConfig};
use crate::regress::{Estimator, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub policy: MissingPolicy,
    pub window: WindowSpec,
    pub simulation: SimulationConfig,
    /// Histogram bins for the strength entropy; `None` means `ceil(sqrt(N))`.
    pub bins: Option<usize>,
    pub estimator: Estimator,
    pub tolerance: f64,
    pub max_iter: usize,
    pub trajectories: bool,
    pub dump_networks: Option<DumpFormat>,
    /// Thread count for window-level parallelism. Not part of the provenance
    /// record since outputs do not depend on it.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            policy: MissingPolicy::default(),
            window: WindowSpec::default(),
            simulation: SimulationConfig::default(),
            bins: None,
            estimator: Estimator::default(),
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            trajectories: false,
            dump_networks: None,
            workers: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

impl PipelineConfig {
    /// Applies a single setting. Keys accept `-` or `_` as separator.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let sim = &mut self.simulation;
        match key.as_str() {
            "input" => self.input = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "policy" => self.policy = value.parse()?,
            "width" => self.window.width = parse(&key, value)?,
            "step" => self.window.step = parse(&key, value)?,
            "lambda" => sim.lambda = parse(&key, value)?,
            "alpha" => sim.alpha = parse(&key, value)?,
            "dt" => sim.dt = parse(&key, value)?,
            "t_max" => sim.t_max = parse(&key, value)?,
            "tail_fraction" => sim.tail_fraction = parse(&key, value)?,
            "seed" => sim.seed = parse(&key, value)?,
            "omega" => sim.omega = value.parse()?,
            "sample_every" => sim.sample_every = parse(&key, value)?,
            "ensemble" => sim.ensemble = parse(&key, value)?,
            "plateau_block" => {
                let block = parse(&key, value)?;
                let tolerance = sim.plateau.map_or(1e-3, |p| p.tolerance);
                sim.plateau = Some(PlateauDetector { block, tolerance });
            }
            "plateau_tolerance" => {
                let tolerance = parse(&key, value)?;
                let block = sim.plateau.map_or(10, |p| p.block);
                sim.plateau = Some(PlateauDetector { block, tolerance });
            }
            "bins" => {
                self.bins = match value {
                    "auto" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "estimator" => self.estimator = value.parse()?,
            "tolerance" => self.tolerance = parse(&key, value)?,
            "max_iter" => self.max_iter = parse(&key, value)?,
            "trajectories" => self.trajectories = parse_bool(&key, value)?,
            "dump_networks" => {
                self.dump_networks = match value {
                    "none" | "" => None,
                    "csv" => Some(DumpFormat::Csv),
                    "binary" | "bin" => Some(DumpFormat::Binary),
                    other => return Err(Error::Config(format!("unknown dump format {other:?}"))),
                }
            }
            "workers" => self.workers = Some(parse(&key, value)?),
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.simulation.validate()?;
        if self.bins == Some(0) {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
