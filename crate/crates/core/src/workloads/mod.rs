//! Desk-scale workloads with independent reference oracles.

pub mod bitmap;
pub mod cnn;
pub mod dataset;
pub mod kernels;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{BaselineReport, Counters};
use crate::error::{Error, Result};
use crate::hierarchy::{Address, Engine};

pub use bitmap::{bitmap_query, passes_needed, BitmapQuery, BitmapStats};
pub use cnn::{run_cnn_forward, CnnSpec};
pub use dataset::BitmapDataset;
pub use kernels::{run_kernel, KernelKind, KernelSpec};

/// Outcome of one workload run. Identical inputs and seed give an
/// identical report apart from `trace_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub workload: String,
    pub seed: u64,
    /// SHA-256 of the functional result (little-endian i64 values), hex.
    pub digest: String,
    pub oracle_match: bool,
    pub cycles: u64,
    pub energy_pj: f64,
    pub baseline: Option<BaselineReport>,
    pub extra: BTreeMap<String, serde_json::Value>,
    pub trace_path: Option<String>,
}

impl RunReport {
    pub fn new(workload: &str, seed: u64, values: &[i64], oracle_match: bool, work: &Counters) -> Self {
        Self {
            workload: workload.into(),
            seed,
            digest: digest(values),
            oracle_match,
            cycles: work.cycles,
            energy_pj: work.energy_pj(),
            baseline: None,
            extra: BTreeMap::new(),
            trace_path: None,
        }
    }

    pub fn with_extra(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.extra.insert(key.into(), value.into());
        self
    }

    /// Flat `key,value` lines for spreadsheet use.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("workload".into(), self.workload.clone()),
            ("seed".into(), self.seed.to_string()),
            ("digest".into(), self.digest.clone()),
            ("oracle_match".into(), self.oracle_match.to_string()),
            ("cycles".into(), self.cycles.to_string()),
            ("energy_pj".into(), self.energy_pj.to_string()),
        ];
        if let Some(b) = &self.baseline {
            rows.push(("baseline_energy_pj".into(), b.baseline_energy_pj.to_string()));
            rows.push((
                "baseline_energy_advantage".into(),
                b.energy_advantage.map_or(String::new(), |v| v.to_string()),
            ));
        }
        for (k, v) in &self.extra {
            rows.push((k.clone(), v.to_string()));
        }
        let mut s = String::from("key,value\n");
        for (k, v) in rows {
            s.push_str(&format!("{k},{}\n", v.replace(',', ";")));
        }
        s
    }
}

pub fn digest(values: &[i64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The first two PIM clusters, used as main and scratch.
pub fn cluster_pair(engine: &Engine) -> Result<(Address, Address)> {
    let mut clusters = engine.geometry().pim_clusters();
    match (clusters.next(), clusters.next()) {
        (Some(m), Some(s)) => Ok((m, s)),
        _ => Err(Error::ScratchUnavailable("two PIM clusters are required".into())),
    }
}
