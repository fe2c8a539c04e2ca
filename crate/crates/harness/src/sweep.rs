//! Map-size by neighbor-count sweep tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Grid};
use crate::error::Result;

/// One scored cell for one target and repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub size: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub normalizer: String,
    pub method: String,
    pub target: String,
    pub seed: u64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub grids: Vec<Grid>,
    pub n_neighbors: Vec<usize>,
    pub normalizers: Vec<String>,
    pub methods: Vec<String>,
    pub targets: Vec<String>,
    pub records: Vec<SweepRecord>,
}

type CellKey = (String, String, String, String, usize);

impl SweepTable {
    pub fn new(cfg: &ExperimentConfig, targets: Vec<String>, records: Vec<SweepRecord>) -> Self {
        let p = &cfg.protocol;
        Self {
            grids: p.grids.clone(),
            n_neighbors: p.n_neighbors.clone(),
            normalizers: p.normalizers.iter().map(|k| k.name().to_string()).collect(),
            methods: p.methods.iter().map(|m| m.name().to_string()).collect(),
            targets,
            records,
        }
    }

    /// Mean RMSE over repeats, keyed by (normalizer, method, target, size, N).
    pub fn cell_means(&self) -> HashMap<CellKey, f64> {
        let mut acc: HashMap<CellKey, (f64, usize)> = HashMap::new();
        for r in &self.records {
            let e = acc
                .entry((r.normalizer.clone(), r.method.clone(), r.target.clone(), r.size.clone(), r.n))
                .or_insert((0.0, 0));
            e.0 += r.rmse;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
    }

    /// Long form: `size,N,normalizer,method,target,seed,rmse`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    /// Wide form: one block per normalizer, method and target; one row per
    /// map size; one column per N; cells are means over repeats.
    pub fn to_layout_csv_string(&self) -> String {
        let means = self.cell_means();
        let mut out = String::from("normalizer,method,target,size");
        for n in &self.n_neighbors {
            let _ = write!(out, ",N={n}");
        }
        out.push('\n');
        for norm in &self.normalizers {
            for method in &self.methods {
                for target in &self.targets {
                    for grid in &self.grids {
                        let size = grid.to_string();
                        let _ = write!(out, "{norm},{method},{target},{size}");
                        for &n in &self.n_neighbors {
                            match means.get(&(norm.clone(), method.clone(), target.clone(), size.clone(), n)) {
                                Some(v) => {
                                    let _ = write!(out, ",{v:.6e}");
                                }
                                None => out.push(','),
                            }
                        }
                        out.push('\n');
                    }
                }
            }
        }
        out
    }

    pub fn write_layout_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_layout_csv_string())?;
        Ok(())
    }
}
