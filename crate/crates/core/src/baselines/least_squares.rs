use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Ridge penalty used when a design matrix is rank-deficient.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Polynomial least-squares regressor without cross terms.
///
/// Coefficient layout per target: `[intercept, x0, x0^2, .., x0^d, x1, ..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresModel {
    pub degree: usize,
    pub n_features: usize,
    pub coefficients: Vec<Vec<f64>>,
    pub ridge: f64,
}

fn expand_row(row: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.push(1.0);
    for &v in row {
        let mut p = 1.0;
        for _ in 0..degree {
            p *= v;
            out.push(p);
        }
    }
}

fn design(x: &Dataset, degree: usize) -> DMatrix<f64> {
    let p = 1 + x.n_cols() * degree;
    let mut buf = Vec::with_capacity(x.n_rows() * p);
    for r in x.rows() {
        expand_row(r, degree, &mut buf);
    }
    DMatrix::from_row_slice(x.n_rows(), p, &buf)
}

fn check_inputs(x: &Dataset, y: &Dataset, degree: usize) -> Result<()> {
    if degree == 0 {
        return Err(Error::InvalidConfig("degree must be at least 1".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.n_rows() != y.n_rows() {
        return Err(Error::DimensionMismatch { expected: x.n_rows(), got: y.n_rows() });
    }
    x.check_finite()?;
    y.check_finite()
}

fn solve_qr(a: DMatrix<f64>, y: &Dataset, reject_rank_deficient: bool) -> Result<Vec<Vec<f64>>> {
    let (m, p) = a.shape();
    if reject_rank_deficient && m < p {
        return Err(Error::RankDeficient { rank: m, cols: p });
    }
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..p).filter(|&i| r[(i, i)].abs() > 1e-10 * diag_max).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, cols: p });
    }
    let qt = qr.q().transpose();
    let mut out = Vec::with_capacity(y.n_cols());
    for t in 0..y.n_cols() {
        let mut b = DVector::from_iterator(y.n_rows(), y.rows().map(|row| row[t]));
        if m > y.n_rows() {
            b = b.resize_vertically(m, 0.0);
        }
        let coef = r.solve_upper_triangular(&(&qt * b)).ok_or(Error::RankDeficient { rank, cols: p })?;
        out.push(coef.iter().copied().collect());
    }
    Ok(out)
}

/// Ordinary least squares via Householder QR. Fails on rank deficiency.
pub fn fit_least_squares(x: &Dataset, y: &Dataset, degree: usize) -> Result<LeastSquaresModel> {
    check_inputs(x, y, degree)?;
    let coefficients = solve_qr(design(x, degree), y, true)?;
    Ok(LeastSquaresModel { degree, n_features: x.n_cols(), coefficients, ridge: 0.0 })
}

/// Ridge-regularized least squares (intercept unpenalized), solved as an
/// augmented QR system.
pub fn fit_least_squares_ridge(x: &Dataset, y: &Dataset, degree: usize, lambda: f64) -> Result<LeastSquaresModel> {
    check_inputs(x, y, degree)?;
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidConfig("ridge penalty must be positive".into()));
    }
    let a = design(x, degree);
    let (m, p) = a.shape();
    let mut aug = a.resize_vertically(m + p - 1, 0.0);
    let s = lambda.sqrt();
    for j in 1..p {
        aug[(m + j - 1, j)] = s;
    }
    let coefficients = solve_qr(aug, y, false)?;
    Ok(LeastSquaresModel { degree, n_features: x.n_cols(), coefficients, ridge: lambda })
}

pub fn predict_ls(model: &LeastSquaresModel, x: &Dataset) -> Result<Dataset> {
    if x.n_cols() != model.n_features {
        return Err(Error::DimensionMismatch { expected: model.n_features, got: x.n_cols() });
    }
    let n_targets = model.coefficients.len();
    let mut values = Vec::with_capacity(x.n_rows() * n_targets);
    let mut buf = Vec::new();
    for r in x.rows() {
        buf.clear();
        expand_row(r, model.degree, &mut buf);
        for coef in &model.coefficients {
            values.push(coef.iter().zip(&buf).map(|(c, v)| c * v).sum());
        }
    }
    let columns = (0..n_targets).map(|t| format!("y{t}")).collect();
    Dataset::new(columns, values)
}
