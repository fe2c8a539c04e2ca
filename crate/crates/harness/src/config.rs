//! Experiment configuration, read from TOML.
//!
//! Every key is optional. A minimal file only names the data:
//!
//! ```toml
//! [data]
//! path = "labeled.csv"
//! target_columns = ["ash"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use topoproj::{Method, NormalizerKind, SomConfig};

use crate::data::{energy_schema, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn n_units(self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid must look like 25x25, got {s:?}"));
        let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        Ok(Self { rows, cols })
    }
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    /// The appliance-energy CSV; the column settings are ignored.
    Energy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled rows, or every row when `unlabeled_path` is absent.
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
    /// Optional separate pool of unlabeled rows with the same feature columns.
    pub unlabeled_path: Option<PathBuf>,
    pub feature_columns: Option<Vec<String>>,
    #[serde(default)]
    pub target_columns: Vec<String>,
    pub id_column: Option<String>,
    #[serde(default)]
    pub ignore_columns: Vec<String>,
}

impl DataConfig {
    pub fn schema(&self) -> Schema {
        match self.format {
            DataFormat::Energy => energy_schema(),
            DataFormat::Csv => Schema {
                feature_columns: self.feature_columns.clone(),
                target_columns: self.target_columns.clone(),
                id_column: self.id_column.clone(),
                ignore_columns: self.ignore_columns.clone(),
            },
        }
    }

    /// Unlabeled rows carry no targets, so their schema drops them.
    pub fn unlabeled_schema(&self) -> Schema {
        let mut s = self.schema();
        if s.feature_columns.is_none() {
            s.ignore_columns.extend(s.target_columns.iter().cloned());
        }
        s.target_columns.clear();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SomSettings {
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Defaults to half the longer grid side.
    pub radius_start: Option<f64>,
    pub radius_end: f64,
}

impl Default for SomSettings {
    fn default() -> Self {
        let d = SomConfig::new(2, 2);
        Self {
            iterations: d.iterations,
            lr_start: d.lr_start,
            lr_end: d.lr_end,
            radius_start: None,
            radius_end: d.radius_end,
        }
    }
}

impl SomSettings {
    pub fn config(&self, grid: Grid, seed: u64) -> SomConfig {
        let mut c = SomConfig::new(grid.rows, grid.cols).with_seed(seed).with_iterations(self.iterations);
        c.lr_start = self.lr_start;
        c.lr_end = self.lr_end;
        if let Some(r) = self.radius_start {
            c.radius_start = r;
        }
        c.radius_end = self.radius_end;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Linear,
    Poly,
    Knn,
    Mean,
    RandomUniform,
    RandomNormal,
}

impl Baseline {
    pub const ALL: [Baseline; 6] = [
        Baseline::Linear,
        Baseline::Poly,
        Baseline::Knn,
        Baseline::Mean,
        Baseline::RandomUniform,
        Baseline::RandomNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Linear => "LINEAR-REG",
            Baseline::Poly => "POLY-REG",
            Baseline::Knn => "KNN",
            Baseline::Mean => "MEAN",
            Baseline::RandomUniform => "RANDOM-UNIFORM",
            Baseline::RandomNormal => "RANDOM-NORMAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub normalizers: Vec<NormalizerKind>,
    /// PCA retained-variance threshold for regressor inputs; absent disables PCA.
    pub pca_threshold: Option<f64>,
    /// Also feed the map PCA scores (uses `pca_threshold`).
    pub pca_before_som: bool,
    pub grids: Vec<Grid>,
    pub n_neighbors: Vec<usize>,
    pub methods: Vec<Method>,
    pub poly_degree: usize,
    /// Draw this many labeled rows per repeat; absent uses every labeled row.
    pub labeled_size: Option<usize>,
    /// Fixed labeled sample ids; overrides `labeled_size`.
    pub labeled_ids: Option<Vec<usize>>,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub baselines: Vec<Baseline>,
    pub knn_k: Vec<usize>,
    /// Degree of the polynomial regression baseline.
    pub regression_degree: usize,
    /// Worker threads; absent uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            normalizers: vec![NormalizerKind::Minmax],
            pca_threshold: None,
            pca_before_som: false,
            grids: vec![Grid::new(25, 25)],
            n_neighbors: vec![3, 5, 7, 10, 12, 15],
            methods: vec![Method::Wavg],
            poly_degree: 2,
            labeled_size: None,
            labeled_ids: None,
            train_fraction: 0.8,
            test_fraction: 0.2,
            folds: 5,
            repeats: 10,
            seed: 0,
            baselines: Baseline::ALL.to_vec(),
            knn_k: vec![1, 2, 3, 5, 7, 10, 15],
            regression_degree: 2,
            jobs: None,
        }
    }
}

/// Grid sizes of the full map-size sweep.
pub const STANDARD_GRIDS: [Grid; 5] =
    [Grid::new(10, 10), Grid::new(15, 15), Grid::new(20, 20), Grid::new(25, 25), Grid::new(30, 30)];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub som: SomSettings,
    #[serde(default)]
    pub protocol: Protocol,
}

impl ExperimentConfig {
    /// Reads a TOML file. Relative data paths resolve against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.path, &mut cfg.data.unlabeled_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        let fail = |m: String| Err(Error::Config(m));
        if !(p.train_fraction > 0.0 && p.test_fraction > 0.0) || (p.train_fraction + p.test_fraction - 1.0).abs() > 1e-9
        {
            return fail(format!(
                "split fractions must be positive and sum to 1, got {} + {}",
                p.train_fraction, p.test_fraction
            ));
        }
        if p.normalizers.is_empty() || p.grids.is_empty() || p.n_neighbors.is_empty() || p.methods.is_empty() {
            return fail("normalizers, grids, n_neighbors and methods must be non-empty".into());
        }
        if p.baselines.contains(&Baseline::Knn) && p.knn_k.is_empty() {
            return fail("knn_k must be non-empty when the KNN baseline is enabled".into());
        }
        if p.n_neighbors.contains(&0) || p.knn_k.contains(&0) {
            return fail("neighbor counts must be positive".into());
        }
        if p.folds < 2 {
            return fail(format!("folds must be at least 2, got {}", p.folds));
        }
        if p.repeats == 0 {
            return fail("repeats must be positive".into());
        }
        if p.pca_before_som && p.pca_threshold.is_none() {
            return fail("pca_before_som needs pca_threshold".into());
        }
        if let Some(t) = p.pca_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return fail(format!("pca_threshold must lie in (0, 1], got {t}"));
            }
        }
        if p.labeled_size == Some(0) {
            return fail("labeled_size must be positive".into());
        }
        for g in &p.grids {
            self.som.config(*g, 0).validate()?;
        }
        Ok(())
    }

    /// Number of training rows for `n` labeled rows.
    pub fn n_train(&self, n: usize) -> usize {
        (self.protocol.train_fraction * n as f64 + 1e-9).floor() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.protocol.folds, 5);
        assert_eq!(cfg.protocol.repeats, 10);
    }

    #[test]
    fn split_sizes() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.n_train(67), 53);
        assert_eq!(67 - cfg.n_train(67), 14);
        assert_eq!(cfg.n_train(50), 40);
        assert_eq!(cfg.n_train(100), 80);
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            [data]
            path = "x.csv"
            target_columns = ["y"]
            [som]
            iterations = 500
            [protocol]
            normalizers = ["minmax", "robust"]
            grids = ["10x10", "15x20"]
            methods = ["WAVG", "POLY"]
            seed = 42
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.protocol.grids, vec![Grid::new(10, 10), Grid::new(15, 20)]);
        assert_eq!(cfg.protocol.methods, vec![Method::Wavg, Method::Poly]);
        assert_eq!(cfg.som.iterations, 500);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(ExperimentConfig::from_toml_str("[protocol]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[protocol]\ngrids = [\"ten\"]").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.train_fraction = 0.7;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.grids = vec![Grid::new(1, 5)];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.methods.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("exp.toml");
        std::fs::write(&f, "[data]\npath = \"d.csv\"\n").unwrap();
        let cfg = ExperimentConfig::from_file(&f).unwrap();
        assert_eq!(cfg.data.path.unwrap(), dir.path().join("d.csv"));
    }
}
