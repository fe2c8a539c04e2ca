use topoproj::Dataset;

use crate::error::{Error, Result};

/// Root-mean-square error per target column.
pub fn rmse(y_true: &Dataset, y_pred: &Dataset) -> Result<Vec<f64>> {
    if y_true.n_rows() != y_pred.n_rows() || y_true.n_cols() != y_pred.n_cols() {
        return Err(Error::Config(format!(
            "shape mismatch: {}x{} vs {}x{}",
            y_true.n_rows(),
            y_true.n_cols(),
            y_pred.n_rows(),
            y_pred.n_cols()
        )));
    }
    if y_true.is_empty() {
        return Err(topoproj::Error::EmptyDataset.into());
    }
    let mut sse = vec![0.0; y_true.n_cols()];
    for (t, p) in y_true.rows().zip(y_pred.rows()) {
        for (s, (a, b)) in sse.iter_mut().zip(t.iter().zip(p)) {
            *s += (a - b) * (a - b);
        }
    }
    let n = y_true.n_rows() as f64;
    Ok(sse.into_iter().map(|s| (s / n).sqrt()).collect())
}
