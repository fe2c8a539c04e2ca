//! Frozen prediction pipeline: normalizer, optional PCA, map, geodesics and
//! the per-unit estimation table, stored together in one versioned file.
//!
//! The file is a single JSON object:
//! `{"format": "topoproj-bundle", "version": 1, "feature_names": [...],
//! "target_names": [...], "normalizer": {...}, "pca": {...} | null,
//! "som": {...}, "geodesic": {...}, "anchors": [...], "projection": {...},
//! "table": {...}}`. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geodesic::GeodesicTable;
use crate::preprocess::{Normalizer, PcaModel};
use crate::projection::{map_labeled, Anchor, EstimationTable, ProjectionConfig};
use crate::som::{Som, SomConfig};
use crate::umatrix::UMatrix;

pub const BUNDLE_FORMAT: &str = "topoproj-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub normalizer: Normalizer,
    pub pca: Option<PcaModel>,
    pub som: Som,
    pub geodesic: GeodesicTable,
    pub anchors: Vec<Anchor>,
    pub projection: ProjectionConfig,
    pub table: EstimationTable,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    bundle: ModelBundle,
}

/// Inputs for [`ModelBundle::fit`].
pub struct FitSpec<'a> {
    pub unlabeled: &'a Dataset,
    pub x_labeled: &'a Dataset,
    pub y_labeled: &'a Dataset,
    pub labeled_ids: Option<&'a [usize]>,
    pub normalizer: crate::preprocess::NormalizerKind,
    pub pca_threshold: Option<f64>,
    pub som: SomConfig,
    pub projection: ProjectionConfig,
}

impl ModelBundle {
    /// Runs the full pipeline: fit transforms on the unlabeled pool, train the
    /// map, compute geodesics, anchor the labeled rows and tabulate estimates.
    pub fn fit(spec: FitSpec<'_>) -> Result<Self> {
        let normalizer = Normalizer::fit(spec.unlabeled, spec.normalizer)?;
        let mut train = normalizer.apply(spec.unlabeled)?;
        let pca = match spec.pca_threshold {
            Some(t) => {
                let p = PcaModel::fit(&train, t)?;
                train = p.project(&train)?;
                Some(p)
            }
            None => None,
        };
        let som = Som::train(&train, &spec.som)?;
        let geodesic = GeodesicTable::from_umatrix(&UMatrix::from_som(&som)?);
        let x = transform_with(&normalizer, pca.as_ref(), spec.x_labeled)?;
        let anchors = map_labeled(&som, &x, spec.y_labeled, spec.labeled_ids)?;
        let table = EstimationTable::build(&geodesic, &anchors, &spec.projection)?;
        Ok(Self {
            feature_names: spec.unlabeled.columns().to_vec(),
            target_names: spec.y_labeled.columns().to_vec(),
            normalizer,
            pca,
            som,
            geodesic,
            anchors,
            projection: spec.projection,
            table,
        })
    }

    /// Raw features into the map's input space.
    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        let z = self.normalizer.apply_row(x)?;
        match &self.pca {
            Some(p) => p.project_row(&z),
            None => Ok(z),
        }
    }

    pub fn transform(&self, x: &Dataset) -> Result<Dataset> {
        transform_with(&self.normalizer, self.pca.as_ref(), x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.transform_row(x)?;
        let unit = self.som.bmu(&z)?;
        Ok(self.table.lookup(unit).to_vec())
    }

    pub fn predict_dataset(&self, x: &Dataset) -> Result<Dataset> {
        let units = self.som.bmus(&self.transform(x)?)?;
        let mut values = Vec::with_capacity(units.len() * self.table.n_targets());
        for u in units {
            values.extend_from_slice(self.table.lookup(u));
        }
        Dataset::new(self.target_names.clone(), values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BundleFile { format: BUNDLE_FORMAT.into(), version: BUNDLE_VERSION, bundle: self.clone() };
        serde_json::to_writer(BufWriter::new(File::create(path)?), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: BundleFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != BUNDLE_FORMAT || file.version != BUNDLE_VERSION {
            return Err(Error::Format(format!("{} v{}", file.format, file.version)));
        }
        let b = file.bundle;
        let som = Som::from_codebook(b.som.config().clone(), b.som.dim(), b.som.codebook().to_vec())?;
        if b.geodesic.n_units() != som.n_units() || b.table.n_units() != som.n_units() {
            return Err(Error::Format("bundle tables do not match the map size".into()));
        }
        Ok(Self { som, ..b })
    }
}

fn transform_with(normalizer: &Normalizer, pca: Option<&PcaModel>, x: &Dataset) -> Result<Dataset> {
    x.check_finite()?;
    let z = normalizer.apply(x)?;
    match pca {
        Some(p) => p.project(&z),
        None => Ok(z),
    }
}
