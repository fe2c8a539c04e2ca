//! Square-grid self-organizing maps.
//!
//! Units are laid out row-major: unit `u` sits at grid position
//! `(u / cols, u % cols)`. Training presents one uniformly drawn sample per
//! iteration and pulls every unit towards it with a Gaussian neighborhood
//! kernel over grid coordinates. Learning rate and radius decay linearly.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{euclidean, squared_euclidean, Dataset};
use crate::error::{Error, Result};

const SOM_FORMAT: &str = "topoproj-som";
const SOM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Neighborhood {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    RandomUniformInFeatureRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub radius_start: f64,
    pub radius_end: f64,
    /// Number of single-sample presentations.
    pub iterations: usize,
    pub neighborhood: Neighborhood,
    pub init: Init,
    pub metric: Metric,
    pub seed: u64,
}

impl SomConfig {
    /// Default hyperparameters for a `rows x cols` map.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            lr_start: 0.5,
            lr_end: 0.05,
            radius_start: rows.max(cols) as f64 / 2.0,
            radius_end: 1.0,
            iterations: 20_000,
            neighborhood: Neighborhood::Gaussian,
            init: Init::RandomUniformInFeatureRange,
            metric: Metric::Euclidean,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn n_units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.rows < 2 || self.cols < 2 {
            return bad("SOM grid needs rows >= 2 and cols >= 2");
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("learning rate must satisfy 0 < lr_end <= lr_start");
        }
        if !(self.radius_end > 0.0 && self.radius_end <= self.radius_start) {
            return bad("radius must satisfy 0 < radius_end <= radius_start");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        Ok(())
    }

    /// Learning rate and radius at iteration `t`.
    fn schedule(&self, t: usize) -> (f64, f64) {
        let frac = if self.iterations > 1 { t as f64 / (self.iterations - 1) as f64 } else { 0.0 };
        (
            self.lr_start + (self.lr_end - self.lr_start) * frac,
            self.radius_start + (self.radius_end - self.radius_start) * frac,
        )
    }
}

/// A trained map. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Som {
    config: SomConfig,
    dim: usize,
    codebook: Vec<f64>,
}

impl Som {
    /// Wraps an explicit codebook (row-major, `rows * cols` vectors of length `dim`).
    pub fn from_codebook(config: SomConfig, dim: usize, codebook: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be positive".into()));
        }
        let expected = config.n_units() * dim;
        if codebook.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: codebook.len() });
        }
        if let Some(p) = codebook.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: p / dim, col: p % dim });
        }
        Ok(Self { config, dim, codebook })
    }

    /// The random initial codebook `train` starts from for this config.
    pub fn initial(x: &Dataset, config: &SomConfig) -> Result<Self> {
        check_training_input(x, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::init_codebook(x, config, &mut rng))
    }

    fn init_codebook(x: &Dataset, config: &SomConfig, rng: &mut ChaCha8Rng) -> Self {
        let ranges = x.column_ranges();
        let mut codebook = Vec::with_capacity(config.n_units() * x.n_cols());
        for _ in 0..config.n_units() {
            for &(lo, hi) in &ranges {
                let u: f64 = rng.random();
                codebook.push(lo + u * (hi - lo));
            }
        }
        Self { config: config.clone(), dim: x.n_cols(), codebook }
    }

    pub fn train(x: &Dataset, config: &SomConfig) -> Result<Self> {
        check_training_input(x, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut som = Self::init_codebook(x, config, &mut rng);
        som.run_iterations(x, &mut rng);
        Ok(som)
    }

    /// Continues training from an existing codebook, using its config.
    pub fn train_from(mut self, x: &Dataset) -> Result<Self> {
        check_training_input(x, &self.config)?;
        if x.n_cols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.n_cols() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.run_iterations(x, &mut rng);
        Ok(self)
    }

    fn run_iterations(&mut self, x: &Dataset, rng: &mut ChaCha8Rng) {
        let n = x.n_rows();
        let dim = self.dim;
        let cols = self.config.cols;
        for t in 0..self.config.iterations {
            let (lr, radius) = self.config.schedule(t);
            let sample = x.row(rng.random_range(0..n));
            let winner = self.bmu_unchecked(sample);
            let (wr, wc) = ((winner / cols) as f64, (winner % cols) as f64);
            let denom = 2.0 * radius * radius;
            for (u, w) in self.codebook.chunks_exact_mut(dim).enumerate() {
                let dr = (u / cols) as f64 - wr;
                let dc = (u % cols) as f64 - wc;
                let h = lr * (-(dr * dr + dc * dc) / denom).exp();
                for (wi, &xi) in w.iter_mut().zip(sample) {
                    *wi += h * (xi - *wi);
                }
            }
        }
    }

    pub fn config(&self) -> &SomConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_units(&self) -> usize {
        self.config.n_units()
    }

    pub fn codebook(&self) -> &[f64] {
        &self.codebook
    }

    pub fn weights(&self, unit: usize) -> &[f64] {
        &self.codebook[unit * self.dim..(unit + 1) * self.dim]
    }

    pub fn unit_index(&self, row: usize, col: usize) -> usize {
        row * self.config.cols + col
    }

    pub fn unit_position(&self, unit: usize) -> (usize, usize) {
        (unit / self.config.cols, unit % self.config.cols)
    }

    /// Best-matching unit; ties go to the lowest unit index.
    pub fn bmu(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(self.bmu_unchecked(x))
    }

    fn bmu_unchecked(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (u, w) in self.codebook.chunks_exact(self.dim).enumerate() {
            let d = squared_euclidean(w, x);
            if d < best_d {
                best_d = d;
                best = u;
            }
        }
        best
    }

    /// BMU of every row, computed in parallel.
    pub fn bmus(&self, x: &Dataset) -> Result<Vec<usize>> {
        if x.n_cols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.n_cols() });
        }
        x.check_finite()?;
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(rows.par_iter().map(|r| self.bmu_unchecked(r)).collect())
    }

    /// Mean Euclidean distance from each sample to its BMU.
    pub fn quantization_error(&self, x: &Dataset) -> Result<f64> {
        if x.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let bmus = self.bmus(x)?;
        let total: f64 = x.rows().zip(&bmus).map(|(r, &u)| euclidean(r, self.weights(u))).sum();
        Ok(total / x.n_rows() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = SomFile { format: SOM_FORMAT.to_string(), version: SOM_FORMAT_VERSION, som: self.clone() };
        serde_json::to_writer(BufWriter::new(File::create(path)?), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: SomFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.format != SOM_FORMAT || file.version != SOM_FORMAT_VERSION {
            return Err(Error::Format(format!("{} v{}", file.format, file.version)));
        }
        let som = file.som;
        Self::from_codebook(som.config, som.dim, som.codebook)
    }
}

#[derive(Serialize, Deserialize)]
struct SomFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    som: Som,
}

fn check_training_input(x: &Dataset, config: &SomConfig) -> Result<()> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.n_cols() == 0 {
        return Err(Error::InvalidConfig("dataset has no feature columns".into()));
    }
    x.check_finite()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Dataset::from_rows(&rows).unwrap()
    }

    fn scan_bmu(som: &Som, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for u in 0..som.n_units() {
            let d: f64 = som.weights(u).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d < best.0 {
                best = (d, u);
            }
        }
        best.1
    }

    #[test]
    fn config_defaults_follow_grid_size() {
        let c = SomConfig::new(10, 30);
        assert_eq!(c.radius_start, 15.0);
        assert_eq!(c.radius_end, 1.0);
        assert_eq!((c.lr_start, c.lr_end), (0.5, 0.05));
        assert_eq!(c.iterations, 20_000);
    }

    #[test]
    fn config_rejects_degenerate_grids_and_schedules() {
        assert!(SomConfig::new(1, 5).validate().is_err());
        let mut c = SomConfig::new(4, 4);
        c.lr_end = 0.6;
        assert!(c.validate().is_err());
        let mut c = SomConfig::new(4, 4);
        c.radius_end = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_runs_linearly_from_start_to_end() {
        let c = SomConfig::new(10, 10).with_iterations(11);
        assert_eq!(c.schedule(0), (0.5, 5.0));
        let (lr, r) = c.schedule(10);
        assert!((lr - 0.05).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        let (lr, r) = c.schedule(5);
        assert!((lr - 0.275).abs() < 1e-15 && (r - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_sample_is_an_attractor() {
        let one = Dataset::from_rows(&[vec![0.3, -2.0, 5.0]]).unwrap();
        let cfg = SomConfig::new(4, 4).with_iterations(3000).with_seed(3);
        let init = Som::from_codebook(cfg.clone(), 3, vec![10.0; 48]).unwrap();
        let before = init.quantization_error(&one).unwrap();
        let trained = init.train_from(&one).unwrap();
        assert!(trained.quantization_error(&one).unwrap() < before);
        for u in 0..trained.n_units() {
            assert!(euclidean(trained.weights(u), one.row(0)) < 1e-9);
        }
        // A lone sample also fixes the init range, so a fresh map starts on it.
        let fresh = Som::train(&one, &cfg).unwrap();
        assert_eq!(fresh.quantization_error(&one).unwrap(), 0.0);
    }

    #[test]
    fn single_sample_pulls_random_init_closer() {
        let x = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let one = Dataset::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let cfg = SomConfig::new(5, 5).with_iterations(200).with_seed(9);
        let init = Som::initial(&x, &cfg).unwrap();
        let before = init.quantization_error(&one).unwrap();
        let trained = init.train_from(&one).unwrap();
        assert!(trained.quantization_error(&one).unwrap() < before);
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_dataset(200, 4, 1);
        let cfg = SomConfig::new(6, 5).with_iterations(2_000).with_seed(42);
        let a = Som::train(&x, &cfg).unwrap();
        let b = Som::train(&x, &cfg).unwrap();
        assert_eq!(a.codebook(), b.codebook());
        let c = Som::train(&x, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.codebook(), c.codebook());
    }

    #[test]
    fn training_rejects_bad_input() {
        let cfg = SomConfig::new(3, 3);
        assert!(matches!(Som::train(&Dataset::empty(vec!["a".into()]), &cfg), Err(Error::EmptyDataset)));
        let x = Dataset::from_rows(&[vec![1.0, f64::INFINITY]]).unwrap();
        assert!(matches!(Som::train(&x, &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn two_blobs_claim_disjoint_units() {
        let mut successes = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..400 {
                let c = if i % 2 == 0 { -5.0 } else { 5.0 };
                rows.push(vec![
                    c + rng.random_range(-0.5..0.5),
                    c + rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ]);
                labels.push(i % 2);
            }
            let x = Dataset::from_rows(&rows).unwrap();
            let som = Som::train(&x, &SomConfig::new(10, 10).with_seed(seed)).unwrap();
            let bmus = som.bmus(&x).unwrap();
            let mut owner = vec![[false; 2]; som.n_units()];
            for (&u, &l) in bmus.iter().zip(&labels) {
                owner[u][l] = true;
            }
            if owner.iter().all(|o| !(o[0] && o[1])) {
                successes += 1;
            }
        }
        assert!(successes >= 9, "only {successes}/10 seeds separated the blobs");
    }

    #[test]
    fn bmu_exact_codebook_vector_and_ties() {
        let x = random_dataset(50, 3, 7);
        let som = Som::train(&x, &SomConfig::new(5, 5).with_iterations(300)).unwrap();
        assert_eq!(som.bmu(som.weights(17)).unwrap(), 17);

        let cfg = SomConfig::new(2, 2);
        let tie = Som::from_codebook(cfg, 1, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert_eq!(tie.bmu(&[0.0]).unwrap(), 0);
        assert_eq!(tie.bmu(&[0.9]).unwrap(), 1);
        assert!(matches!(tie.bmu(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bmu_matches_linear_scan() {
        let x = random_dataset(100, 4, 11);
        let som = Som::train(&x, &SomConfig::new(5, 5).with_iterations(1_000)).unwrap();
        let queries = random_dataset(1_000, 4, 12);
        for q in queries.rows() {
            assert_eq!(som.bmu(q).unwrap(), scan_bmu(&som, q));
        }
    }

    #[test]
    fn quantization_error_cases() {
        let cfg = SomConfig::new(2, 2);
        let cb = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let som = Som::from_codebook(cfg, 2, cb.clone()).unwrap();
        let exact = Dataset::new(vec!["a".into(), "b".into()], cb).unwrap();
        assert_eq!(som.quantization_error(&exact).unwrap(), 0.0);

        let one = Dataset::from_rows(&[vec![4.0, 5.0]]).unwrap();
        assert!((som.quantization_error(&one).unwrap() - 5.0).abs() < 1e-12);
        let three = Dataset::from_rows(&[vec![-3.0, 0.0]]).unwrap();
        assert!((som.quantization_error(&three).unwrap() - 3.0).abs() < 1e-12);

        let empty = Dataset::empty(vec!["a".into(), "b".into()]);
        assert!(matches!(som.quantization_error(&empty), Err(Error::EmptyDataset)));
    }

    #[allow(clippy::needless_range_loop)]
    #[test]
    fn quantization_error_matches_two_loop_recomputation() {
        let x = random_dataset(300, 5, 21);
        let som = Som::train(&x, &SomConfig::new(6, 6).with_iterations(1_500)).unwrap();
        let mut total = 0.0;
        for r in x.rows() {
            let mut best = f64::INFINITY;
            for u in 0..som.n_units() {
                let mut acc = 0.0;
                for k in 0..som.dim() {
                    acc += (som.weights(u)[k] - r[k]).powi(2);
                }
                best = best.min(acc.sqrt());
            }
            total += best;
        }
        let expected = total / x.n_rows() as f64;
        assert!((som.quantization_error(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn training_beats_initial_codebook_on_seed_battery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for i in 0..300 {
            let c = [(-3.0, 0.0), (3.0, 1.0), (0.0, 4.0)][i % 3];
            rows.push(vec![c.0 + rng.random_range(-0.7..0.7), c.1 + rng.random_range(-0.7..0.7)]);
        }
        let x = Dataset::from_rows(&rows).unwrap();
        for seed in 0..10 {
            let cfg = SomConfig::new(10, 10).with_seed(seed);
            let init = Som::initial(&x, &cfg).unwrap().quantization_error(&x).unwrap();
            let done = Som::train(&x, &cfg).unwrap().quantization_error(&x).unwrap();
            assert!(done < init, "seed {seed}: {done} >= {init}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let x = random_dataset(40, 3, 2);
        let som = Som::train(&x, &SomConfig::new(4, 3).with_iterations(100)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        som.save(&path).unwrap();
        assert_eq!(Som::load(&path).unwrap(), som);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn codebook_stays_within_expanded_data_range(seed in 0u64..1_000, n in 2usize..30) {
            let x = random_dataset(n, 3, seed);
            let som = Som::train(&x, &SomConfig::new(4, 4).with_iterations(400).with_seed(seed)).unwrap();
            let ranges = x.column_ranges();
            for u in 0..som.n_units() {
                for (k, &(lo, hi)) in ranges.iter().enumerate() {
                    let w = som.weights(u)[k];
                    let span = hi - lo;
                    prop_assert!(w >= lo - span && w <= hi + span);
                }
            }
        }
    }
}
