//! Feature normalization and PCA.
//!
//! Every normalizer is an affine map `(x - center) / scale` per feature.
//! Features with zero scale map to 0 and invert to their center.
//! Robust quartiles use linear interpolation between order statistics
//! (position `q * (n - 1)` in the sorted column).

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerKind {
    Minmax,
    Standard,
    Robust,
}

impl NormalizerKind {
    pub const ALL: [NormalizerKind; 3] = [NormalizerKind::Minmax, NormalizerKind::Standard, NormalizerKind::Robust];

    pub fn name(self) -> &'static str {
        match self {
            NormalizerKind::Minmax => "minmax",
            NormalizerKind::Standard => "standard",
            NormalizerKind::Robust => "robust",
        }
    }
}

impl std::fmt::Display for NormalizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NormalizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minmax" | "min-max" => Ok(NormalizerKind::Minmax),
            "standard" | "zscore" | "z-score" => Ok(NormalizerKind::Standard),
            "robust" => Ok(NormalizerKind::Robust),
            other => Err(Error::InvalidConfig(format!("unknown normalizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    kind: NormalizerKind,
    center: Vec<f64>,
    scale: Vec<f64>,
}

/// Quantile by linear interpolation on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Normalizer {
    pub fn fit(x: &Dataset, kind: NormalizerKind) -> Result<Self> {
        if x.n_rows() < 2 {
            return Err(Error::InvalidConfig("normalizer needs at least 2 rows to fit".into()));
        }
        x.check_finite()?;
        let n = x.n_rows() as f64;
        let mut center = Vec::with_capacity(x.n_cols());
        let mut scale = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let mut col = x.column(j);
            let (c, s) = match kind {
                NormalizerKind::Minmax => {
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi - lo)
                }
                NormalizerKind::Standard => {
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
                NormalizerKind::Robust => {
                    col.sort_by(f64::total_cmp);
                    let median = quantile_sorted(&col, 0.5);
                    (median, quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25))
                }
            };
            center.push(c);
            scale.push(s);
        }
        Ok(Self { kind, center, scale })
    }

    pub fn kind(&self) -> NormalizerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(row.len())?;
        Ok(row
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| if *s > 0.0 { (v - c) / s } else { 0.0 })
            .collect())
    }

    pub fn inverse_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(row.len())?;
        Ok(row
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| if *s > 0.0 { v * s + c } else { *c })
            .collect())
    }

    pub fn apply(&self, x: &Dataset) -> Result<Dataset> {
        self.map_rows(x, |r| self.apply_row(r))
    }

    pub fn inverse(&self, x: &Dataset) -> Result<Dataset> {
        self.map_rows(x, |r| self.inverse_row(r))
    }

    fn map_rows(&self, x: &Dataset, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Dataset> {
        self.check_dim(x.n_cols())?;
        let mut values = Vec::with_capacity(x.values().len());
        for r in x.rows() {
            values.extend(f(r)?);
        }
        Dataset::new(x.columns().to_vec(), values)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    /// Writes `feature,center,scale` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>, names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "center", "scale"])?;
        for (j, (c, s)) in self.center.iter().zip(&self.scale).enumerate() {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
            w.write_record(&[name, c.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Principal components retained up to a cumulative variance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `k x dim`, row-major; each row a unit-length principal axis.
    components: Vec<f64>,
    /// All covariance eigenvalues, descending.
    eigenvalues: Vec<f64>,
    k: usize,
    explained_fraction: f64,
}

impl PcaModel {
    pub fn fit(x: &Dataset, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!("PCA threshold {threshold} outside (0, 1]")));
        }
        if x.n_rows() < 2 {
            return Err(Error::InvalidConfig("PCA needs at least 2 rows".into()));
        }
        x.check_finite()?;
        let (n, d) = (x.n_rows(), x.n_cols());
        let mut mean = vec![0.0; d];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = eigenvalues.iter().sum();

        let mut k = d;
        let mut cum = 0.0;
        if total > 0.0 {
            for (i, ev) in eigenvalues.iter().enumerate() {
                cum += ev;
                if cum / total >= threshold - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
        } else {
            k = 1;
        }
        let explained_fraction = if total > 0.0 { eigenvalues[..k].iter().sum::<f64>() / total } else { 1.0 };

        let mut components = Vec::with_capacity(k * d);
        for &i in order.iter().take(k) {
            let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Sign convention: largest-magnitude entry positive.
            let pivot = axis.iter().cloned().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            components.extend(axis);
        }
        Ok(Self { mean, components, eigenvalues, k, explained_fraction })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_fraction(&self) -> f64 {
        self.explained_fraction
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: row.len() });
        }
        Ok((0..self.k)
            .map(|i| self.component(i).iter().zip(row.iter().zip(&self.mean)).map(|(c, (v, m))| c * (v - m)).sum())
            .collect())
    }

    pub fn project(&self, x: &Dataset) -> Result<Dataset> {
        let columns = (0..self.k).map(|i| format!("pc{i}")).collect();
        let mut values = Vec::with_capacity(x.n_rows() * self.k);
        for r in x.rows() {
            values.extend(self.project_row(r)?);
        }
        Dataset::new(columns, values)
    }

    /// Maps scores from the first `k` components back to feature space.
    pub fn reconstruct_row(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (i, s) in scores.iter().enumerate().take(self.k) {
            for (o, c) in out.iter_mut().zip(self.component(i)) {
                *o += s * c;
            }
        }
        out
    }

    /// Writes `component,explained,<features...>` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let total: f64 = self.eigenvalues.iter().sum();
        let mut header = vec!["component".to_string(), "explained".to_string()];
        header.extend((0..self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        w.write_record(["mean".to_string(), String::new()].into_iter().chain(self.mean.iter().map(f64::to_string)))?;
        for i in 0..self.k {
            let frac = if total > 0.0 { self.eigenvalues[i] / total } else { 0.0 };
            w.write_record(
                [format!("pc{i}"), frac.to_string()].into_iter().chain(self.component(i).iter().map(f64::to_string)),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
