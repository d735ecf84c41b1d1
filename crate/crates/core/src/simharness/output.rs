//! CSV tables produced by the harness.
//!
//! Rows are sorted into a fixed scenario order before writing and floats use
//! the shortest round-trip representation, so identical results always give
//! identical bytes.

use std::cmp::Ordering;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row type with a fixed header and a deterministic ordering.
pub trait CsvRow: Serialize + Clone {
    const HEADER: &'static [&'static str];
    fn order(&self, other: &Self) -> Ordering;
}

/// One (scenario, method) rejection count from a size or power run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub endpoint: String,
    /// Group-1 population parameter of the cell.
    pub reference: f64,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub effect: f64,
    /// `dp` or `nonprivate`.
    pub method: String,
    pub rejections: u64,
    pub replicates: u64,
    pub rejection_rate: f64,
}

impl RateRow {
    /// Monte Carlo standard error of the rejection rate.
    pub fn mc_se(&self) -> f64 {
        let p = self.rejection_rate;
        (p * (1.0 - p) / self.replicates as f64).sqrt()
    }
}

impl CsvRow for RateRow {
    const HEADER: &'static [&'static str] = &[
        "endpoint",
        "reference",
        "n",
        "m",
        "epsilon",
        "effect",
        "method",
        "rejections",
        "replicates",
        "rejection_rate",
    ];

    fn order(&self, other: &Self) -> Ordering {
        self.endpoint
            .cmp(&other.endpoint)
            .then(self.reference.total_cmp(&other.reference))
            .then(self.n.cmp(&other.n))
            .then(self.m.cmp(&other.m))
            .then(self.epsilon.total_cmp(&other.epsilon))
            .then(self.effect.total_cmp(&other.effect))
            .then(self.method.cmp(&other.method))
    }
}

/// Agreement percentages for one comparison and budget in the emulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationRow {
    pub comparison: String,
    pub outcome: String,
    pub epsilon: f64,
    pub both_equiv_pct: f64,
    pub both_nonequiv_pct: f64,
    pub np_only_pct: f64,
    pub dp_only_pct: f64,
}

impl CsvRow for EmulationRow {
    const HEADER: &'static [&'static str] =
        &["comparison", "outcome", "epsilon", "both_equiv_pct", "both_nonequiv_pct", "np_only_pct", "dp_only_pct"];

    fn order(&self, other: &Self) -> Ordering {
        self.outcome
            .cmp(&other.outcome)
            .then(self.comparison.cmp(&other.comparison))
            .then(self.epsilon.total_cmp(&other.epsilon))
    }
}

/// Sorted CSV text with a header row, also for an empty table.
pub fn to_csv_bytes<R: CsvRow>(rows: &[R]) -> Result<Vec<u8>> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(R::order);
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let wrap = |source: csv::Error| Error::Csv { path: "<memory>".into(), source };
    wtr.write_record(R::HEADER).map_err(wrap)?;
    for row in &sorted {
        wtr.serialize(row).map_err(wrap)?;
    }
    wtr.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
}

pub fn write_csv<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    let bytes = to_csv_bytes(rows)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|source| Error::Csv { path: path.to_path_buf(), source })
}
