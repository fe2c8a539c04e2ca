//! Topological projection of labeled anchors onto a trained map.
//!
//! Every labeled sample is pinned to its best-matching unit. A unit's
//! prediction comes from the `n` anchors closest to it in geodesic distance,
//! combined by one of several estimators. Predictions are tabulated once per
//! unit, so inference is a BMU search followed by a table lookup.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geodesic::GeodesicTable;
use crate::seed::derive_seed;
use crate::som::Som;

/// A labeled sample pinned to its BMU. `y` is in original target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub sample_id: usize,
    pub unit: usize,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Inverse-distance weighted mean.
    Wavg,
    /// Plain mean of the nearest anchors.
    Avg,
    /// Plain mean of randomly chosen anchors.
    Rand,
    /// Line fit of target against distance, read at distance zero.
    Linear,
    /// Polynomial fit of target against distance, read at distance zero.
    Poly,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Wavg, Method::Avg, Method::Rand, Method::Linear, Method::Poly];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wavg => "WAVG",
            Method::Avg => "AVG",
            Method::Rand => "RAND",
            Method::Linear => "LINEAR",
            Method::Poly => "POLY",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WAVG" => Ok(Method::Wavg),
            "AVG" => Ok(Method::Avg),
            "RAND" => Ok(Method::Rand),
            "LINEAR" | "LS" => Ok(Method::Linear),
            "POLY" | "POLYNOMIAL" => Ok(Method::Poly),
            other => Err(Error::InvalidConfig(format!("unknown projection method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub method: Method,
    pub n_neighbors: usize,
    #[serde(default = "default_poly_degree")]
    pub poly_degree: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_poly_degree() -> usize {
    2
}

impl ProjectionConfig {
    pub fn new(method: Method, n_neighbors: usize) -> Self {
        Self { method, n_neighbors, poly_degree: 2, seed: 0 }
    }

    pub fn validate(&self, n_anchors: usize) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::InvalidConfig("n_neighbors must be positive".into()));
        }
        if self.n_neighbors > n_anchors {
            return Err(Error::TooFewAnchors { requested: self.n_neighbors, available: n_anchors });
        }
        if self.method == Method::Poly && (self.poly_degree == 0 || self.poly_degree + 1 > self.n_neighbors) {
            return Err(Error::InvalidConfig(format!(
                "polynomial degree {} needs at least {} neighbors, got {}",
                self.poly_degree,
                self.poly_degree + 1,
                self.n_neighbors
            )));
        }
        Ok(())
    }

    fn fit_degree(&self) -> usize {
        match self.method {
            Method::Poly => self.poly_degree,
            _ => 1,
        }
    }
}

/// An anchor together with its geodesic distance from a query unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a> {
    pub anchor: &'a Anchor,
    pub distance: f64,
}

/// Pins each labeled row to its BMU. `x_labeled` must already be in the
/// map's input space. Sample ids default to row positions.
pub fn map_labeled(
    som: &Som,
    x_labeled: &Dataset,
    y_labeled: &Dataset,
    sample_ids: Option<&[usize]>,
) -> Result<Vec<Anchor>> {
    if x_labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x_labeled.n_rows() != y_labeled.n_rows() {
        return Err(Error::DimensionMismatch { expected: x_labeled.n_rows(), got: y_labeled.n_rows() });
    }
    if let Some(ids) = sample_ids {
        if ids.len() != x_labeled.n_rows() {
            return Err(Error::DimensionMismatch { expected: x_labeled.n_rows(), got: ids.len() });
        }
    }
    let units = som.bmus(x_labeled)?;
    Ok(units
        .into_iter()
        .enumerate()
        .map(|(i, unit)| Anchor { sample_id: sample_ids.map_or(i, |ids| ids[i]), unit, y: y_labeled.row(i).to_vec() })
        .collect())
}

/// The `n` anchors geodesically closest to `unit`, ascending by distance,
/// ties broken by ascending sample id.
pub fn nearest_anchors<'a>(
    geo: &GeodesicTable,
    anchors: &'a [Anchor],
    unit: usize,
    n: usize,
) -> Result<Vec<Neighbor<'a>>> {
    if anchors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    if n > anchors.len() {
        return Err(Error::TooFewAnchors { requested: n, available: anchors.len() });
    }
    let from = geo.row(unit);
    let mut all: Vec<Neighbor<'a>> =
        anchors.iter().map(|anchor| Neighbor { anchor, distance: from[anchor.unit] }).collect();
    let by_rank = |a: &Neighbor, b: &Neighbor| {
        a.distance.total_cmp(&b.distance).then(a.anchor.sample_id.cmp(&b.anchor.sample_id))
    };
    if n < all.len() {
        all.select_nth_unstable_by(n - 1, by_rank);
        all.truncate(n);
    }
    all.sort_by(by_rank);
    Ok(all)
}

fn target_dim(neighbors: &[Neighbor]) -> Result<usize> {
    let first = neighbors.first().ok_or(Error::EmptyDataset)?;
    let dim = first.anchor.y.len();
    if let Some(bad) = neighbors.iter().find(|n| n.anchor.y.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.anchor.y.len() });
    }
    Ok(dim)
}

fn mean_of<'a>(ys: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut count = 0.0;
    for y in ys {
        for (a, v) in acc.iter_mut().zip(y) {
            *a += v;
        }
        count += 1.0;
    }
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

/// Inverse-distance weighted mean of neighbor targets. Neighbors at distance
/// zero take over entirely: their plain mean is returned.
pub fn estimate_wavg(neighbors: &[Neighbor]) -> Result<Vec<f64>> {
    let dim = target_dim(neighbors)?;
    if neighbors.iter().any(|n| n.distance.is_nan() || n.distance < 0.0) {
        return Err(Error::InvalidConfig("neighbor distances must be non-negative".into()));
    }
    if neighbors.iter().any(|n| n.distance == 0.0) {
        let at_zero = neighbors.iter().filter(|n| n.distance == 0.0);
        return Ok(mean_of(at_zero.map(|n| n.anchor.y.as_slice()), dim));
    }
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for n in neighbors {
        let w = 1.0 / n.distance;
        for (a, v) in num.iter_mut().zip(&n.anchor.y) {
            *a += v * w;
        }
        den += w;
    }
    Ok(num.into_iter().map(|a| a / den).collect())
}

pub fn estimate_avg(neighbors: &[Neighbor]) -> Result<Vec<f64>> {
    let dim = target_dim(neighbors)?;
    Ok(mean_of(neighbors.iter().map(|n| n.anchor.y.as_slice()), dim))
}

/// Mean of `n` anchors drawn uniformly without replacement.
pub fn estimate_rand(anchors: &[Anchor], n: usize, seed: u64) -> Result<Vec<f64>> {
    if anchors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n == 0 || n > anchors.len() {
        return Err(Error::TooFewAnchors { requested: n, available: anchors.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, anchors.len(), n);
    let dim = anchors[0].y.len();
    Ok(mean_of(picked.iter().map(|i| anchors[i].y.as_slice()), dim))
}

/// Least-squares polynomial of target against distance, evaluated at zero,
/// fitted independently per target dimension.
pub fn estimate_linefit(neighbors: &[Neighbor], degree: usize) -> Result<Vec<f64>> {
    let dim = target_dim(neighbors)?;
    if degree == 0 {
        return Err(Error::InvalidConfig("fit degree must be at least 1".into()));
    }
    let mut distinct: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::DegenerateFit(format!(
            "{} distinct distances cannot determine a degree-{degree} fit",
            distinct.len()
        )));
    }
    // Rescaling distances leaves the intercept unchanged and conditions the powers.
    let scale = distinct.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let m = neighbors.len();
    let design = DMatrix::from_fn(m, degree + 1, |i, j| (neighbors[i].distance / scale).powi(j as i32));
    let qr = design.qr();
    let (q, r) = (qr.q(), qr.r());
    let qt = q.transpose();
    let mut out = Vec::with_capacity(dim);
    for t in 0..dim {
        let y = DVector::from_iterator(m, neighbors.iter().map(|n| n.anchor.y[t]));
        let coef = r
            .solve_upper_triangular(&(&qt * y))
            .ok_or_else(|| Error::DegenerateFit("singular triangular factor".into()))?;
        out.push(coef[0]);
    }
    Ok(out)
}

/// Applies the configured estimator at one unit.
pub fn estimate_at(
    geo: &GeodesicTable,
    anchors: &[Anchor],
    unit: usize,
    config: &ProjectionConfig,
) -> Result<Vec<f64>> {
    if config.method == Method::Rand {
        return estimate_rand(anchors, config.n_neighbors, derive_seed(config.seed, &[unit as u64]));
    }
    let neighbors = nearest_anchors(geo, anchors, unit, config.n_neighbors)?;
    match config.method {
        Method::Wavg => estimate_wavg(&neighbors),
        Method::Avg => estimate_avg(&neighbors),
        Method::Linear | Method::Poly => match estimate_linefit(&neighbors, config.fit_degree()) {
            Err(Error::DegenerateFit(_)) => estimate_avg(&neighbors),
            other => other,
        },
        Method::Rand => unreachable!(),
    }
}

/// Per-unit predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationTable {
    n_targets: usize,
    values: Vec<f64>,
}

impl EstimationTable {
    pub fn build(geo: &GeodesicTable, anchors: &[Anchor], config: &ProjectionConfig) -> Result<Self> {
        config.validate(anchors.len())?;
        let n_targets = anchors[0].y.len();
        if let Some(bad) = anchors.iter().find(|a| a.y.len() != n_targets) {
            return Err(Error::DimensionMismatch { expected: n_targets, got: bad.y.len() });
        }
        if let Some(bad) = anchors.iter().find(|a| a.unit >= geo.n_units()) {
            return Err(Error::InvalidConfig(format!("anchor unit {} outside the map", bad.unit)));
        }
        let rows: Vec<Vec<f64>> =
            (0..geo.n_units()).into_par_iter().map(|u| estimate_at(geo, anchors, u, config)).collect::<Result<_>>()?;
        Ok(Self { n_targets, values: rows.concat() })
    }

    pub fn n_units(&self) -> usize {
        self.values.len() / self.n_targets.max(1)
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn lookup(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.n_targets..(unit + 1) * self.n_targets]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::som::SomConfig;
    use crate::umatrix::UMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn anchor(sample_id: usize, unit: usize, y: &[f64]) -> Anchor {
        Anchor { sample_id, unit, y: y.to_vec() }
    }

    fn neighbors<'a>(anchors: &'a [Anchor], dists: &[f64]) -> Vec<Neighbor<'a>> {
        anchors.iter().zip(dists).map(|(anchor, &distance)| Neighbor { anchor, distance }).collect()
    }

    fn random_geo(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> GeodesicTable {
        let mut w = |k: usize| -> Vec<f64> { (0..k).map(|_| 1.0 - rng.random::<f64>()).collect() };
        let h = w(rows * (cols - 1));
        let v = w((rows - 1) * cols);
        GeodesicTable::from_umatrix(&UMatrix::from_edge_weights(rows, cols, h, v).unwrap())
    }

    fn random_anchors(rng: &mut ChaCha8Rng, k: usize, n_units: usize, dim: usize) -> Vec<Anchor> {
        (0..k)
            .map(|i| Anchor {
                sample_id: i,
                unit: rng.random_range(0..n_units),
                y: (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn map_labeled_pins_rows_to_bmus() {
        let cb: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let som = Som::from_codebook(SomConfig::new(3, 3), 1, cb).unwrap();
        let x = Dataset::from_rows(&[vec![5.0], vec![5.1], vec![5.0]]).unwrap();
        let y = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let anchors = map_labeled(&som, &x, &y, Some(&[10, 11, 12])).unwrap();
        assert_eq!(anchors.len(), 3);
        assert_eq!(anchors[0], anchor(10, 5, &[1.0]));
        assert_eq!(anchors[0].unit, anchors[2].unit);
        let short = Dataset::from_rows(&[vec![1.0]]).unwrap();
        assert!(map_labeled(&som, &x, &short, None).is_err());
        assert!(map_labeled(&som, &Dataset::empty(vec!["a".into()]), &Dataset::empty(vec!["t".into()]), None).is_err());
    }

    #[test]
    fn nearest_includes_anchor_at_query_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let geo = random_geo(&mut rng, 4, 4);
        let anchors = vec![anchor(0, 9, &[1.0]), anchor(1, 5, &[2.0])];
        let nn = nearest_anchors(&geo, &anchors, 5, 1).unwrap();
        assert_eq!(nn.len(), 1);
        assert_eq!((nn[0].anchor.sample_id, nn[0].distance), (1, 0.0));
        assert!(matches!(nearest_anchors(&geo, &anchors, 5, 3), Err(Error::TooFewAnchors { .. })));
    }

    #[test]
    fn nearest_on_a_strip_sorts_by_path_length() {
        // 2 x 4 strip with cheap top row: ends are units 0 and 3.
        let um = UMatrix::from_edge_weights(2, 4, vec![1.0, 1.0, 1.0, 9.0, 9.0, 9.0], vec![9.0; 4]).unwrap();
        let geo = GeodesicTable::from_umatrix(&um);
        let anchors = vec![anchor(0, 3, &[30.0]), anchor(1, 0, &[0.0])];
        let nn = nearest_anchors(&geo, &anchors, 1, 2).unwrap();
        assert_eq!(nn[0].anchor.sample_id, 1);
        assert_eq!(nn[0].distance, 1.0);
        assert_eq!(nn[1].distance, 2.0);
    }

    #[test]
    fn nearest_ties_break_by_sample_id() {
        let um = UMatrix::from_edge_weights(2, 2, vec![1.0; 2], vec![1.0; 2]).unwrap();
        let geo = GeodesicTable::from_umatrix(&um);
        let anchors = vec![anchor(7, 1, &[0.0]), anchor(3, 2, &[0.0]), anchor(5, 1, &[0.0])];
        let ids: Vec<usize> =
            nearest_anchors(&geo, &anchors, 0, 3).unwrap().iter().map(|n| n.anchor.sample_id).collect();
        assert_eq!(ids, vec![3, 5, 7]);
    }

    fn sort_oracle(geo: &GeodesicTable, anchors: &[Anchor], unit: usize, n: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = anchors.iter().map(|a| (a.sample_id, geo.distance(unit, a.unit))).collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(n);
        all
    }

    #[test]
    fn nearest_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let geo = random_geo(&mut rng, 8, 8);
        let anchors = random_anchors(&mut rng, 12, 64, 1);
        for unit in 0..64 {
            let got: Vec<(usize, f64)> = nearest_anchors(&geo, &anchors, unit, 5)
                .unwrap()
                .iter()
                .map(|n| (n.anchor.sample_id, n.distance))
                .collect();
            assert_eq!(got, sort_oracle(&geo, &anchors, unit, 5));
        }
    }

    #[test]
    fn wavg_worked_example() {
        let a = [anchor(0, 0, &[10.0]), anchor(1, 0, &[20.0]), anchor(2, 0, &[40.0])];
        let e = estimate_wavg(&neighbors(&a, &[1.0, 2.0, 4.0])).unwrap();
        // (10 + 10 + 10) / 1.75
        assert!((e[0] - 17.142_857_142_857_142).abs() < 1e-12);
    }

    #[test]
    fn wavg_equal_distances_is_mean_and_zero_distance_wins() {
        let a = [anchor(0, 0, &[10.0, 1.0]), anchor(1, 0, &[20.0, 2.0]), anchor(2, 0, &[40.0, 3.0])];
        let eq = estimate_wavg(&neighbors(&a, &[0.7; 3])).unwrap();
        let avg = estimate_avg(&neighbors(&a, &[0.7; 3])).unwrap();
        assert!((eq[0] - 70.0 / 3.0).abs() < 1e-12);
        assert!((eq[1] - avg[1]).abs() < 1e-15);
        let z = estimate_wavg(&neighbors(&a, &[0.5, 0.0, 2.0])).unwrap();
        assert_eq!(z, vec![20.0, 2.0]);
        let z2 = estimate_wavg(&neighbors(&a, &[0.0, 0.0, 2.0])).unwrap();
        assert_eq!(z2, vec![15.0, 1.5]);
        assert!(estimate_wavg(&[]).is_err());
    }

    #[allow(clippy::needless_range_loop)]
    #[test]
    fn avg_cases() {
        let a = [anchor(0, 0, &[10.0]), anchor(1, 0, &[20.0]), anchor(2, 0, &[40.0])];
        let e = estimate_avg(&neighbors(&a, &[3.0, 0.1, 9.0])).unwrap();
        assert!((e[0] - 23.333_333_333_333_332).abs() < 1e-12);
        assert_eq!(estimate_avg(&neighbors(&a[1..2], &[4.0])).unwrap(), vec![20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.random_range(1..10);
            let anchors = random_anchors(&mut rng, k, 10, 3);
            let d: Vec<f64> = (0..k).map(|_| rng.random()).collect();
            let got = estimate_avg(&neighbors(&anchors, &d)).unwrap();
            for t in 0..3 {
                let naive = anchors.iter().map(|a| a.y[t]).sum::<f64>() / k as f64;
                assert!((got[t] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rand_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchors = random_anchors(&mut rng, 8, 10, 2);
        let global = mean_of(anchors.iter().map(|a| a.y.as_slice()), 2);
        for seed in 0..5 {
            let e = estimate_rand(&anchors, 8, seed).unwrap();
            for t in 0..2 {
                assert!((e[t] - global[t]).abs() < 1e-12);
            }
        }
        assert_eq!(estimate_rand(&anchors, 3, 11).unwrap(), estimate_rand(&anchors, 3, 11).unwrap());
        assert!(estimate_rand(&anchors, 9, 0).is_err());
    }

    #[test]
    fn rand_single_draw_is_unbiased() {
        let anchors: Vec<Anchor> = (0..20).map(|i| anchor(i, 0, &[(i * i) as f64])).collect();
        let ys: Vec<f64> = anchors.iter().map(|a| a.y[0]).collect();
        let mu = ys.iter().sum::<f64>() / 20.0;
        let var = ys.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / 20.0;
        let draws = 10_000;
        let mean = (0..draws).map(|s| estimate_rand(&anchors, 1, s).unwrap()[0]).sum::<f64>() / draws as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se, "mean {mean} vs {mu} (se {se})");
    }

    #[test]
    fn linefit_cases() {
        let a = [anchor(0, 0, &[10.0]), anchor(1, 0, &[20.0])];
        let e = estimate_linefit(&neighbors(&a, &[1.0, 2.0]), 1).unwrap();
        assert!(e[0].abs() < 1e-9);

        let c = [anchor(0, 0, &[7.0]), anchor(1, 0, &[7.0]), anchor(2, 0, &[7.0])];
        let e = estimate_linefit(&neighbors(&c, &[0.3, 1.1, 2.5]), 1).unwrap();
        assert!((e[0] - 7.0).abs() < 1e-9);

        let p = [anchor(0, 0, &[1.0]), anchor(1, 0, &[4.0]), anchor(2, 0, &[9.0])];
        let e = estimate_linefit(&neighbors(&p, &[1.0, 2.0, 3.0]), 2).unwrap();
        assert!(e[0].abs() < 1e-9);

        assert!(matches!(estimate_linefit(&neighbors(&p, &[2.0, 2.0, 2.0]), 1), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn linefit_falls_back_to_avg_when_degenerate() {
        let um = UMatrix::from_edge_weights(2, 2, vec![1.0; 2], vec![1.0; 2]).unwrap();
        let geo = GeodesicTable::from_umatrix(&um);
        let anchors = vec![anchor(0, 3, &[2.0]), anchor(1, 3, &[4.0])];
        let cfg = ProjectionConfig::new(Method::Linear, 2);
        assert_eq!(estimate_at(&geo, &anchors, 0, &cfg).unwrap(), vec![3.0]);
    }

    #[test]
    fn table_with_single_anchor_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geo = random_geo(&mut rng, 5, 4);
        let anchors = vec![anchor(0, 13, &[4.5, -1.0])];
        let t = EstimationTable::build(&geo, &anchors, &ProjectionConfig::new(Method::Wavg, 1)).unwrap();
        assert_eq!(t.n_units(), 20);
        for u in 0..20 {
            assert_eq!(t.lookup(u), &[4.5, -1.0]);
        }
    }

    #[test]
    fn table_at_lone_anchor_unit_returns_its_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let geo = random_geo(&mut rng, 6, 6);
        let mut anchors = random_anchors(&mut rng, 10, 36, 1);
        anchors[4].unit = 17;
        for (i, a) in anchors.iter_mut().enumerate() {
            if i != 4 && a.unit == 17 {
                a.unit = 18;
            }
        }
        let t = EstimationTable::build(&geo, &anchors, &ProjectionConfig::new(Method::Wavg, 3)).unwrap();
        assert_eq!(t.lookup(17), anchors[4].y.as_slice());
    }

    #[test]
    fn table_matches_pointwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let geo = random_geo(&mut rng, 7, 5);
        let anchors = random_anchors(&mut rng, 15, 35, 2);
        for method in Method::ALL {
            let cfg = ProjectionConfig { method, n_neighbors: 5, poly_degree: 2, seed: 77 };
            let t = EstimationTable::build(&geo, &anchors, &cfg).unwrap();
            for u in 0..35 {
                let nn = nearest_anchors(&geo, &anchors, u, 5).unwrap();
                let expected = match method {
                    Method::Wavg => estimate_wavg(&nn).unwrap(),
                    Method::Avg => estimate_avg(&nn).unwrap(),
                    Method::Rand => estimate_rand(&anchors, 5, derive_seed(77, &[u as u64])).unwrap(),
                    Method::Linear => estimate_linefit(&nn, 1).unwrap_or_else(|_| estimate_avg(&nn).unwrap()),
                    Method::Poly => estimate_linefit(&nn, 2).unwrap_or_else(|_| estimate_avg(&nn).unwrap()),
                };
                assert_eq!(t.lookup(u), expected.as_slice(), "{method} unit {u}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ProjectionConfig::new(Method::Wavg, 4).validate(3).is_err());
        assert!(ProjectionConfig::new(Method::Wavg, 0).validate(3).is_err());
        assert!(ProjectionConfig::new(Method::Poly, 2).validate(5).is_err());
        assert!(ProjectionConfig::new(Method::Poly, 3).validate(5).is_ok());
        assert_eq!("wavg".parse::<Method>().unwrap(), Method::Wavg);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn wavg_and_avg_are_convex(
            ys in prop::collection::vec(-1e3f64..1e3, 1..12),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchors: Vec<Anchor> = ys.iter().enumerate().map(|(i, &y)| anchor(i, 0, &[y])).collect();
            let d: Vec<f64> = ys.iter().map(|_| rng.random_range(0.0..3.0)).collect();
            let nn = neighbors(&anchors, &d);
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for e in [estimate_wavg(&nn).unwrap()[0], estimate_avg(&nn).unwrap()[0]] {
                prop_assert!(e >= lo - 1e-9 && e <= hi + 1e-9);
            }
        }

        #[test]
        fn wavg_is_scale_invariant(
            ys in prop::collection::vec(-1e3f64..1e3, 1..12),
            c in 1e-3f64..1e3,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchors: Vec<Anchor> = ys.iter().enumerate().map(|(i, &y)| anchor(i, 0, &[y])).collect();
            let d: Vec<f64> = ys.iter().map(|_| rng.random_range(0.01..3.0)).collect();
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let a = estimate_wavg(&neighbors(&anchors, &d)).unwrap()[0];
            let b = estimate_wavg(&neighbors(&anchors, &scaled)).unwrap()[0];
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn wavg_with_equal_distances_equals_avg(
            ys in prop::collection::vec(-1e3f64..1e3, 1..12),
            d in 0.01f64..10.0,
        ) {
            let anchors: Vec<Anchor> = ys.iter().enumerate().map(|(i, &y)| anchor(i, 0, &[y])).collect();
            let dist = vec![d; ys.len()];
            let a = estimate_wavg(&neighbors(&anchors, &dist)).unwrap()[0];
            let b = estimate_avg(&neighbors(&anchors, &dist)).unwrap()[0];
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn two_point_line_extrapolates_to_zero(
            d1 in 0.01f64..5.0, gap in 0.01f64..5.0, y1 in -100.0f64..100.0, y2 in -100.0f64..100.0,
        ) {
            let d2 = d1 + gap;
            let anchors = [anchor(0, 0, &[y1]), anchor(1, 0, &[y2])];
            let e = estimate_linefit(&neighbors(&anchors, &[d1, d2]), 1).unwrap()[0];
            let closed = y1 - d1 * (y2 - y1) / (d2 - d1);
            prop_assert!((e - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
        }
    }
}
