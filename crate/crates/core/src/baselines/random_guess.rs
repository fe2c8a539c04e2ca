use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuessDistribution {
    /// Uniform over each target's observed `[min, max]`.
    Uniform,
    /// Normal with each target's sample mean and standard deviation.
    Normal,
}

/// `n` random predictions per target, fitted to the observed targets.
pub fn random_guess(y_observed: &Dataset, dist: GuessDistribution, seed: u64, n: usize) -> Result<Dataset> {
    if y_observed.is_empty() {
        return Err(Error::EmptyDataset);
    }
    y_observed.check_finite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = y_observed.n_cols();
    let count = y_observed.n_rows() as f64;
    let params: Vec<(f64, f64)> = match dist {
        GuessDistribution::Uniform => y_observed.column_ranges(),
        GuessDistribution::Normal => (0..d)
            .map(|j| {
                let col = y_observed.column(j);
                let mean = col.iter().sum::<f64>() / count;
                let var = if col.len() > 1 {
                    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)
                } else {
                    0.0
                };
                (mean, var.sqrt())
            })
            .collect(),
    };
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &(a, b) in &params {
            let v = match dist {
                GuessDistribution::Uniform if b > a => rng.random_range(a..=b),
                GuessDistribution::Uniform => a,
                GuessDistribution::Normal if b > 0.0 => {
                    Normal::new(a, b).map_err(|e| Error::InvalidConfig(e.to_string()))?.sample(&mut rng)
                }
                GuessDistribution::Normal => a,
            };
            values.push(v);
        }
    }
    Dataset::new(y_observed.columns().to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_gives_constant_guesses() {
        let y = Dataset::from_rows(&[vec![4.0], vec![4.0], vec![4.0]]).unwrap();
        for dist in [GuessDistribution::Uniform, GuessDistribution::Normal] {
            let g = random_guess(&y, dist, 1, 50).unwrap();
            assert!(g.values().iter().all(|&v| v == 4.0));
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let y = Dataset::from_rows(&[vec![0.0, 1.0], vec![10.0, 3.0]]).unwrap();
        for dist in [GuessDistribution::Uniform, GuessDistribution::Normal] {
            assert_eq!(random_guess(&y, dist, 9, 20).unwrap(), random_guess(&y, dist, 9, 20).unwrap());
        }
    }

    #[test]
    fn uniform_rmse_against_midpoint_matches_closed_form() {
        let y = Dataset::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let g = random_guess(&y, GuessDistribution::Uniform, 3, 100_000).unwrap();
        assert!(g.values().iter().all(|v| (0.0..=10.0).contains(v)));
        let rmse = (g.values().iter().map(|v| (v - 5.0).powi(2)).sum::<f64>() / 100_000.0).sqrt();
        let expected = (25.0f64 / 3.0).sqrt();
        assert!((rmse - expected).abs() / expected < 0.02, "{rmse} vs {expected}");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(random_guess(&Dataset::empty(vec!["y".into()]), GuessDistribution::Uniform, 0, 1).is_err());
    }
}
