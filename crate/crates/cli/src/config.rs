//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::path::{Path, PathBuf};

use racetrack_pim::cost::CostTable;
use racetrack_pim::hierarchy::Geometry;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: Geometry,
    /// Cost table file; the built-in table when absent.
    pub cost_table: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub jobs: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            cost_table: None,
            seed: 0,
            out: PathBuf::from("out"),
            trace: false,
            jobs: 1,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub trd: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trace: bool,
    pub jobs: Option<usize>,
    pub cost_table: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(t) = flags.trd {
            cfg.geometry.trd = t;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(o) = &flags.out {
            cfg.out = o.clone();
        }
        if let Some(c) = &flags.cost_table {
            cfg.cost_table = Some(c.clone());
        }
        cfg.trace |= flags.trace;
        if let Some(j) = flags.jobs {
            cfg.jobs = j;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cost_table(&self) -> Result<CostTable, CliError> {
        match &self.cost_table {
            Some(p) => CostTable::load(p).map_err(|e| CliError::Usage(format!("cost table {}: {e}", p.display()))),
            None => Ok(CostTable::default()),
        }
    }
}
