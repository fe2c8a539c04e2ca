//! Result records and their CSV / JSON renderings.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSet {
    /// Held-out share of the labeled subset.
    Test,
    /// Rows with known targets outside the labeled subset.
    Remaining,
    /// Leave-one-out over the labeled subset.
    Loo,
}

impl EvalSet {
    pub fn name(self) -> &'static str {
        match self {
            EvalSet::Test => "test",
            EvalSet::Remaining => "remaining",
            EvalSet::Loo => "loo",
        }
    }
}

/// One RMSE, in original target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub repeat: usize,
    pub seed: u64,
    pub normalizer: String,
    pub method: String,
    /// Map size of the scored cell, empty for non-map methods.
    pub size: String,
    /// Neighbor count (N for maps, k for KNN), if any.
    pub n: Option<usize>,
    pub eval_set: EvalSet,
    pub target: String,
    pub rmse: f64,
    /// Mean cross-validation RMSE that selected this cell, if selection ran.
    pub cv_rmse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Split,
    Loo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub normalizer: String,
    pub method: String,
    pub size: String,
    pub n: Option<usize>,
    pub eval_set: EvalSet,
    pub target: String,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ReportKind,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn select<'a>(&'a self, pred: impl Fn(&EvalRecord) -> bool + 'a) -> impl Iterator<Item = &'a EvalRecord> + 'a {
        self.records.iter().filter(move |r| pred(r))
    }

    /// Means over repeats. Split reports pool the per-repeat selected cells;
    /// leave-one-out reports keep each map cell separate.
    pub fn summary(&self) -> Vec<SummaryRow> {
        type Key = (String, String, String, Option<usize>, EvalSet, String);
        let mut order: Vec<Key> = Vec::new();
        let mut groups: HashMap<Key, Vec<f64>> = HashMap::new();
        for r in &self.records {
            let (size, n) = match self.kind {
                ReportKind::Loo => (r.size.clone(), r.n),
                ReportKind::Split => (String::new(), None),
            };
            let key = (r.normalizer.clone(), r.method.clone(), size, n, r.eval_set, r.target.clone());
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r.rmse);
        }
        order
            .into_iter()
            .map(|key| {
                let v = &groups[&key];
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let std = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                let (normalizer, method, size, n, eval_set, target) = key;
                SummaryRow {
                    normalizer,
                    method,
                    size,
                    n,
                    eval_set,
                    target,
                    mean_rmse: mean,
                    std_rmse: std,
                    repeats: v.len(),
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.records, path)
    }

    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.summary(), path)
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable record of one CLI invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<ExperimentConfig>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub repeat_seeds: Vec<u64>,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}
