use rayon::prelude::*;

use crate::dataset::{squared_euclidean, Dataset};
use crate::error::{Error, Result};

/// Unweighted mean of the `k` Euclidean-nearest training targets; equal
/// distances are ordered by training row.
pub fn knn_predict(x_train: &Dataset, y_train: &Dataset, query: &[f64], k: usize) -> Result<Vec<f64>> {
    if x_train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x_train.n_rows() != y_train.n_rows() {
        return Err(Error::DimensionMismatch { expected: x_train.n_rows(), got: y_train.n_rows() });
    }
    if query.len() != x_train.n_cols() {
        return Err(Error::DimensionMismatch { expected: x_train.n_cols(), got: query.len() });
    }
    if k == 0 || k > x_train.n_rows() {
        return Err(Error::InvalidConfig(format!("k = {k} with {} training rows", x_train.n_rows())));
    }
    let mut order: Vec<(f64, usize)> =
        x_train.rows().enumerate().map(|(i, r)| (squared_euclidean(r, query), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    let mut out = vec![0.0; y_train.n_cols()];
    for &(_, i) in &order[..k] {
        for (o, v) in out.iter_mut().zip(y_train.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= k as f64);
    Ok(out)
}

pub fn knn_predict_dataset(x_train: &Dataset, y_train: &Dataset, x: &Dataset, k: usize) -> Result<Dataset> {
    let rows: Vec<&[f64]> = x.rows().collect();
    let preds: Vec<Vec<f64>> = rows.par_iter().map(|q| knn_predict(x_train, y_train, q, k)).collect::<Result<_>>()?;
    Dataset::new(y_train.columns().to_vec(), preds.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn k_equal_to_rows_is_global_mean() {
        let x = random(1, 10, 2);
        let y = random(2, 10, 1);
        let mean = y.values().iter().sum::<f64>() / 10.0;
        let p = knn_predict(&x, &y, &[0.3, 0.3], 10).unwrap();
        assert!((p[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn one_neighbor_of_training_point_is_its_target() {
        let x = random(3, 30, 3);
        let y = random(4, 30, 2);
        for i in 0..30 {
            assert_eq!(knn_predict(&x, &y, x.row(i), 1).unwrap(), y.row(i));
        }
    }

    #[test]
    fn ties_prefer_earlier_rows() {
        let x = Dataset::from_rows(&[vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let y = Dataset::from_rows(&[vec![10.0], vec![20.0], vec![30.0]]).unwrap();
        assert_eq!(knn_predict(&x, &y, &[0.0], 1).unwrap(), vec![10.0]);
        assert_eq!(knn_predict(&x, &y, &[0.0], 2).unwrap(), vec![15.0]);
    }

    #[test]
    fn rejects_bad_k() {
        let x = random(5, 3, 1);
        assert!(knn_predict(&x, &x, &[0.0], 4).is_err());
        assert!(knn_predict(&x, &x, &[0.0], 0).is_err());
    }
}
