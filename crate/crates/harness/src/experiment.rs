//! Split, leave-one-out and sweep protocols.
//!
//! Seeds: repeat `r` uses `derive_seed(base, [r])`. Every random step inside a
//! repeat derives from that with its own stream tag plus the map grid and
//! neighbor count where relevant, so normalizers share splits and map seeds.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use topoproj::baselines::{
    fit_least_squares, fit_least_squares_ridge, knn_predict_dataset, predict_ls, random_guess, GuessDistribution,
    LeastSquaresModel, DEFAULT_RIDGE,
};
use topoproj::projection::estimate_at;
use topoproj::seed::derive_seed;
use topoproj::{
    Anchor, Dataset, GeodesicTable, Method, Normalizer, NormalizerKind, PcaModel, ProjectionConfig, Som, UMatrix,
};

use crate::config::{Baseline, DataConfig, ExperimentConfig, Grid};
use crate::data::{load_csv, LabeledTable};
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::report::{EvalRecord, EvalReport, EvalSet, ReportKind};
use crate::sweep::{SweepRecord, SweepTable};

pub(crate) mod stream {
    pub const SUBSET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const SOM: u64 = 4;
    pub const RAND: u64 = 5;
    pub const GUESS: u64 = 6;
}

pub fn repeat_seed(base: u64, repeat: usize) -> u64 {
    derive_seed(base, &[repeat as u64])
}

/// Loaded data in canonical (sample id) order.
#[derive(Debug, Clone)]
pub struct Inputs {
    labeled: LabeledTable,
    unlabeled: Option<LabeledTable>,
}

fn check_unique_ids(t: &LabeledTable) -> Result<()> {
    let mut seen = HashSet::with_capacity(t.ids.len());
    for id in &t.ids {
        if !seen.insert(*id) {
            return Err(Error::Config(format!("duplicate sample id {id}")));
        }
    }
    Ok(())
}

impl Inputs {
    /// `labeled` must carry targets. Without `unlabeled`, the map trains on
    /// the feature rows of `labeled` itself (targets are never shown to it).
    pub fn new(labeled: LabeledTable, unlabeled: Option<LabeledTable>) -> Result<Self> {
        labeled.targets()?;
        check_unique_ids(&labeled)?;
        if let Some(u) = &unlabeled {
            check_unique_ids(u)?;
            if u.features.n_cols() != labeled.features.n_cols() {
                return Err(topoproj::Error::DimensionMismatch {
                    expected: labeled.features.n_cols(),
                    got: u.features.n_cols(),
                }
                .into());
            }
        }
        Ok(Self { labeled: labeled.sorted_by_id(), unlabeled: unlabeled.map(|u| u.without_targets().sorted_by_id()) })
    }

    pub fn load(data: &DataConfig) -> Result<Self> {
        let path = data.path.as_ref().ok_or_else(|| Error::Config("data.path is not set".into()))?;
        let labeled = load_csv(path, &data.schema())?;
        let unlabeled = data.unlabeled_path.as_ref().map(|p| load_csv(p, &data.unlabeled_schema())).transpose()?;
        Self::new(labeled, unlabeled)
    }

    pub fn labeled(&self) -> &LabeledTable {
        &self.labeled
    }

    pub fn unlabeled(&self) -> Option<&LabeledTable> {
        self.unlabeled.as_ref()
    }

    pub fn target_names(&self) -> &[String] {
        self.labeled.targets.as_ref().map(|t| t.columns()).unwrap_or(&[])
    }
}

/// Rows used by one repeat.
#[derive(Debug, Clone)]
pub struct RepeatPlan {
    pub repeat: usize,
    pub seed: u64,
    /// Labeled subset in id order.
    pub labeled: LabeledTable,
    /// Positions into `labeled`, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Labeled rows left out of the subset, if any.
    pub remaining: Option<LabeledTable>,
    /// Map training rows (features only).
    pub pool: Dataset,
}

fn choose_labeled(cfg: &ExperimentConfig, inputs: &Inputs, seed: u64) -> Result<Vec<usize>> {
    let all = &inputs.labeled;
    let n = all.n_rows();
    let p = &cfg.protocol;
    if let Some(ids) = &p.labeled_ids {
        let pos: HashMap<usize, usize> = all.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut chosen = ids
            .iter()
            .map(|id| pos.get(id).copied().ok_or_else(|| Error::Config(format!("labeled id {id} not in data"))))
            .collect::<Result<Vec<_>>>()?;
        chosen.sort_unstable();
        chosen.dedup();
        return Ok(chosen);
    }
    match p.labeled_size {
        Some(m) if m > n => Err(Error::Config(format!("labeled_size {m} exceeds the {n} labeled rows"))),
        Some(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::SUBSET]));
            let mut chosen = index::sample(&mut rng, n, m).into_vec();
            chosen.sort_unstable();
            Ok(chosen)
        }
        None => Ok((0..n).collect()),
    }
}

fn complement(n: usize, chosen: &[usize]) -> Vec<usize> {
    let set: HashSet<usize> = chosen.iter().copied().collect();
    (0..n).filter(|i| !set.contains(i)).collect()
}

fn plan_common(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    repeat: usize,
) -> Result<(u64, Vec<usize>, Option<LabeledTable>)> {
    let seed = repeat_seed(cfg.protocol.seed, repeat);
    let chosen = choose_labeled(cfg, inputs, seed)?;
    let rest = complement(inputs.labeled.n_rows(), &chosen);
    let remaining = (!rest.is_empty()).then(|| inputs.labeled.select(&rest));
    Ok((seed, chosen, remaining))
}

/// Draws the labeled subset and its train/test split. Without a separate
/// unlabeled file the map pool is every row except the test rows.
pub fn plan_split(cfg: &ExperimentConfig, inputs: &Inputs, repeat: usize) -> Result<RepeatPlan> {
    let (seed, chosen, remaining) = plan_common(cfg, inputs, repeat)?;
    let m = chosen.len();
    let n_train = cfg.n_train(m);
    if n_train == m || n_train < cfg.protocol.folds {
        return Err(Error::Config(format!(
            "labeled set of {m} rows is too small for a {}/{} split with {} folds",
            cfg.protocol.train_fraction, cfg.protocol.test_fraction, cfg.protocol.folds
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::SPLIT])));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let pool = match &inputs.unlabeled {
        Some(u) => u.features.clone(),
        None => {
            let test_rows: Vec<usize> = test.iter().map(|&t| chosen[t]).collect();
            inputs.labeled.features.select_rows(&complement(inputs.labeled.n_rows(), &test_rows))
        }
    };
    Ok(RepeatPlan { repeat, seed, labeled: inputs.labeled.select(&chosen), train, test, remaining, pool })
}

/// Labeled subset for leave-one-out; the map pool includes every row.
pub fn plan_loo(cfg: &ExperimentConfig, inputs: &Inputs, repeat: usize) -> Result<RepeatPlan> {
    let (seed, chosen, remaining) = plan_common(cfg, inputs, repeat)?;
    if chosen.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least two labeled rows".into()));
    }
    let pool = match &inputs.unlabeled {
        Some(u) => u.features.clone(),
        None => inputs.labeled.features.clone(),
    };
    let train = (0..chosen.len()).collect();
    Ok(RepeatPlan { repeat, seed, labeled: inputs.labeled.select(&chosen), train, test: Vec::new(), remaining, pool })
}

/// Feature transforms fitted on the map pool.
#[derive(Debug, Clone)]
pub struct Prep {
    pub normalizer: Normalizer,
    pub pca: Option<PcaModel>,
    pub pca_before_som: bool,
}

impl Prep {
    pub fn fit(cfg: &ExperimentConfig, pool: &Dataset, kind: NormalizerKind) -> Result<Self> {
        let normalizer = Normalizer::fit(pool, kind)?;
        let pca = match cfg.protocol.pca_threshold {
            Some(t) => Some(PcaModel::fit(&normalizer.apply(pool)?, t)?),
            None => None,
        };
        Ok(Self { normalizer, pca, pca_before_som: cfg.protocol.pca_before_som })
    }

    pub fn for_regression(&self, x: &Dataset) -> Result<Dataset> {
        let z = self.normalizer.apply(x)?;
        Ok(match &self.pca {
            Some(p) => p.project(&z)?,
            None => z,
        })
    }

    pub fn for_som(&self, x: &Dataset) -> Result<Dataset> {
        if self.pca_before_som {
            self.for_regression(x)
        } else {
            Ok(self.normalizer.apply(x)?)
        }
    }
}

/// A trained map with its geodesics and the BMUs of the plan's rows.
pub struct MapStage {
    pub grid: Grid,
    pub som: Som,
    pub geo: GeodesicTable,
    /// BMU of each labeled-subset row.
    pub units: Vec<usize>,
    pub remaining_units: Option<Vec<usize>>,
}

pub fn map_seed(repeat_seed: u64, grid: Grid) -> u64 {
    derive_seed(repeat_seed, &[stream::SOM, grid.rows as u64, grid.cols as u64])
}

pub fn build_stage(cfg: &ExperimentConfig, plan: &RepeatPlan, prep: &Prep, grid: Grid) -> Result<MapStage> {
    let pool = prep.for_som(&plan.pool)?;
    let som = Som::train(&pool, &cfg.som.config(grid, map_seed(plan.seed, grid)))?;
    let geo = GeodesicTable::from_umatrix(&UMatrix::from_som(&som)?);
    let units = som.bmus(&prep.for_som(&plan.labeled.features)?)?;
    let remaining_units = match &plan.remaining {
        Some(t) => Some(som.bmus(&prep.for_som(&t.features)?)?),
        None => None,
    };
    Ok(MapStage { grid, som, geo, units, remaining_units })
}

pub fn projection_config(
    cfg: &ExperimentConfig,
    repeat_seed: u64,
    grid: Grid,
    method: Method,
    n: usize,
) -> ProjectionConfig {
    ProjectionConfig {
        method,
        n_neighbors: n,
        poly_degree: cfg.protocol.poly_degree,
        seed: derive_seed(repeat_seed, &[stream::RAND, grid.rows as u64, grid.cols as u64, n as u64]),
    }
}

fn anchors_at(plan: &RepeatPlan, stage: &MapStage, positions: &[usize]) -> Result<Vec<Anchor>> {
    let y = plan.labeled.targets()?;
    Ok(positions
        .iter()
        .map(|&p| Anchor { sample_id: plan.labeled.ids[p], unit: stage.units[p], y: y.row(p).to_vec() })
        .collect())
}

/// Estimates at each of `units`, one row per unit, computing each distinct unit once.
pub fn predict_units(
    geo: &GeodesicTable,
    anchors: &[Anchor],
    units: &[usize],
    pcfg: &ProjectionConfig,
    target_names: &[String],
) -> Result<Dataset> {
    pcfg.validate(anchors.len())?;
    let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut values = Vec::with_capacity(units.len() * target_names.len());
    for &u in units {
        if let Entry::Vacant(e) = cache.entry(u) {
            e.insert(estimate_at(geo, anchors, u, pcfg)?);
        }
        values.extend_from_slice(&cache[&u]);
    }
    Ok(Dataset::new(target_names.to_vec(), values)?)
}

/// Map-cell predictions for held-out rows with every training row anchored.
fn som_cell_test(
    cfg: &ExperimentConfig,
    plan: &RepeatPlan,
    stage: &MapStage,
    method: Method,
    n: usize,
) -> Result<(Dataset, Option<Dataset>)> {
    let anchors = anchors_at(plan, stage, &plan.train)?;
    let pcfg = projection_config(cfg, plan.seed, stage.grid, method, n);
    let names = plan.labeled.targets()?.columns();
    let test_units: Vec<usize> = plan.test.iter().map(|&p| stage.units[p]).collect();
    let test = predict_units(&stage.geo, &anchors, &test_units, &pcfg, names)?;
    let remaining = match &stage.remaining_units {
        Some(u) => Some(predict_units(&stage.geo, &anchors, u, &pcfg, names)?),
        None => None,
    };
    Ok((test, remaining))
}

/// Splits positions `0..n` into `k` folds after a seeded shuffle.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, p) in order.into_iter().enumerate() {
        folds[i % k].push(p);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Mean per-target RMSE over folds, or `None` when the cell cannot run on
/// some fold (too few anchors).
fn cv_mean(
    folds: &[Vec<usize>],
    n_train: usize,
    mut score: impl FnMut(&[usize], &[usize]) -> Result<Option<Vec<f64>>>,
) -> Result<Option<Vec<f64>>> {
    let mut total: Option<Vec<f64>> = None;
    for fold in folds {
        let held: HashSet<usize> = fold.iter().copied().collect();
        let fit: Vec<usize> = (0..n_train).filter(|i| !held.contains(i)).collect();
        let Some(r) = score(&fit, fold)? else { return Ok(None) };
        match &mut total {
            Some(t) => t.iter_mut().zip(&r).for_each(|(a, b)| *a += b),
            None => total = Some(r),
        }
    }
    Ok(total.map(|t| t.into_iter().map(|v| v / folds.len() as f64).collect()))
}

fn som_cv(
    cfg: &ExperimentConfig,
    plan: &RepeatPlan,
    stage: &MapStage,
    folds: &[Vec<usize>],
    method: Method,
    n: usize,
) -> Result<Option<Vec<f64>>> {
    let y = plan.labeled.targets()?;
    let pcfg = projection_config(cfg, plan.seed, stage.grid, method, n);
    cv_mean(folds, plan.train.len(), |fit, held| {
        let fit_pos: Vec<usize> = fit.iter().map(|&i| plan.train[i]).collect();
        let held_pos: Vec<usize> = held.iter().map(|&i| plan.train[i]).collect();
        if pcfg.validate(fit_pos.len()).is_err() {
            return Ok(None);
        }
        let anchors = anchors_at(plan, stage, &fit_pos)?;
        let units: Vec<usize> = held_pos.iter().map(|&p| stage.units[p]).collect();
        let pred = predict_units(&stage.geo, &anchors, &units, &pcfg, y.columns())?;
        Ok(Some(rmse(&y.select_rows(&held_pos), &pred)?))
    })
}

/// Per target, the index of the candidate with the lowest score. Candidates
/// arrive in preference order, so ties keep the earlier one.
fn select_per_target(scores: &[Option<Vec<f64>>], n_targets: usize) -> Option<Vec<usize>> {
    (0..n_targets)
        .map(|t| {
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    if best.is_none_or(|(_, b)| s[t] < b) {
                        best = Some((i, s[t]));
                    }
                }
            }
            best.map(|(i, _)| i)
        })
        .collect()
}

fn fit_regression(x: &Dataset, y: &Dataset, degree: usize) -> Result<LeastSquaresModel> {
    match fit_least_squares(x, y, degree) {
        Err(topoproj::Error::RankDeficient { .. }) => Ok(fit_least_squares_ridge(x, y, degree, DEFAULT_RIDGE)?),
        other => Ok(other?),
    }
}

fn constant_rows(value: &[f64], n: usize, names: &[String]) -> Result<Dataset> {
    Ok(Dataset::new(names.to_vec(), value.iter().copied().cycle().take(n * value.len()).collect())?)
}

fn column_means(y: &Dataset) -> Vec<f64> {
    (0..y.n_cols()).map(|j| y.column(j).iter().sum::<f64>() / y.n_rows() as f64).collect()
}

struct Recorder<'a> {
    plan: &'a RepeatPlan,
    names: Vec<String>,
    out: Vec<EvalRecord>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        normalizer: &str,
        method: &str,
        size: &str,
        n: Option<usize>,
        set: EvalSet,
        target: usize,
        rmse: f64,
        cv: Option<f64>,
    ) {
        self.out.push(EvalRecord {
            repeat: self.plan.repeat,
            seed: self.plan.seed,
            normalizer: normalizer.to_string(),
            method: method.to_string(),
            size: size.to_string(),
            n,
            eval_set: set,
            target: self.names[target].clone(),
            rmse,
            cv_rmse: cv,
        });
    }

    fn push_all(&mut self, normalizer: &str, method: &str, set: EvalSet, scores: &[f64]) {
        for (t, s) in scores.iter().enumerate() {
            self.push(normalizer, method, "", None, set, t, *s, None);
        }
    }
}

fn with_pool<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match cfg.protocol.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn som_method_name(m: Method) -> String {
    format!("SOM-{}", m.name())
}

fn split_repeat(cfg: &ExperimentConfig, inputs: &Inputs, repeat: usize) -> Result<Vec<EvalRecord>> {
    let p = &cfg.protocol;
    let plan = plan_split(cfg, inputs, repeat)?;
    let y = plan.labeled.targets()?;
    let names = y.columns().to_vec();
    let y_train = y.select_rows(&plan.train);
    let y_test = y.select_rows(&plan.test);
    let y_rem = plan.remaining.as_ref().map(|t| t.targets()).transpose()?;
    let folds = make_folds(plan.train.len(), p.folds, derive_seed(plan.seed, &[stream::FOLDS]));
    let mut rec = Recorder { plan: &plan, names: names.clone(), out: Vec::new() };

    let score_sets =
        |rec: &mut Recorder, norm: &str, method: &str, test: &Dataset, rem: Option<&Dataset>| -> Result<()> {
            rec.push_all(norm, method, EvalSet::Test, &rmse(&y_test, test)?);
            if let (Some(pred), Some(truth)) = (rem, y_rem) {
                rec.push_all(norm, method, EvalSet::Remaining, &rmse(truth, pred)?);
            }
            Ok(())
        };

    let n_rem = y_rem.map_or(0, |t| t.n_rows());
    for b in &p.baselines {
        let (test, rem) = match b {
            Baseline::Mean => {
                let m = column_means(&y_train);
                (constant_rows(&m, plan.test.len(), &names)?, constant_rows(&m, n_rem, &names)?)
            }
            Baseline::RandomUniform | Baseline::RandomNormal => {
                let (dist, tag) = match b {
                    Baseline::RandomUniform => (GuessDistribution::Uniform, 0),
                    _ => (GuessDistribution::Normal, 1),
                };
                let s = derive_seed(plan.seed, &[stream::GUESS, tag]);
                let test = random_guess(&y_train, dist, s, plan.test.len())?;
                let rem = if n_rem > 0 {
                    random_guess(&y_train, dist, derive_seed(s, &[1]), n_rem)?
                } else {
                    Dataset::empty(names.clone())
                };
                (test, rem)
            }
            _ => continue,
        };
        score_sets(&mut rec, "none", b.name(), &test, (n_rem > 0).then_some(&rem))?;
    }

    for &kind in &p.normalizers {
        let norm = kind.name();
        let prep = Prep::fit(cfg, &plan.pool, kind)?;
        let x = prep.for_regression(&plan.labeled.features)?;
        let x_train = x.select_rows(&plan.train);
        let x_test = x.select_rows(&plan.test);
        let x_rem = match &plan.remaining {
            Some(t) => Some(prep.for_regression(&t.features)?),
            None => None,
        };

        for b in &p.baselines {
            let degree = match b {
                Baseline::Linear => 1,
                Baseline::Poly => p.regression_degree,
                _ => continue,
            };
            let model = fit_regression(&x_train, &y_train, degree)?;
            let rem = x_rem.as_ref().map(|xr| predict_ls(&model, xr)).transpose()?;
            score_sets(&mut rec, norm, b.name(), &predict_ls(&model, &x_test)?, rem.as_ref())?;
        }

        if p.baselines.contains(&Baseline::Knn) {
            let scores = p
                .knn_k
                .iter()
                .map(|&k| {
                    cv_mean(&folds, plan.train.len(), |fit, held| {
                        if k > fit.len() {
                            return Ok(None);
                        }
                        let pred = knn_predict_dataset(
                            &x_train.select_rows(fit),
                            &y_train.select_rows(fit),
                            &x_train.select_rows(held),
                            k,
                        )?;
                        Ok(Some(rmse(&y_train.select_rows(held), &pred)?))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let choice = select_per_target(&scores, names.len())
                .ok_or_else(|| Error::Config("no KNN k fits inside the cross-validation folds".into()))?;
            let mut cache: HashMap<usize, (Dataset, Option<Dataset>)> = HashMap::new();
            for (t, &ci) in choice.iter().enumerate() {
                let k = p.knn_k[ci];
                if let Entry::Vacant(e) = cache.entry(ci) {
                    let test = knn_predict_dataset(&x_train, &y_train, &x_test, k)?;
                    let rem = x_rem.as_ref().map(|xr| knn_predict_dataset(&x_train, &y_train, xr, k)).transpose()?;
                    e.insert((test, rem));
                }
                let (test, rem) = &cache[&ci];
                let cv = scores[ci].as_ref().map(|s| s[t]);
                rec.push(norm, Baseline::Knn.name(), "", Some(k), EvalSet::Test, t, rmse(&y_test, test)?[t], cv);
                if let (Some(pred), Some(truth)) = (rem, y_rem) {
                    rec.push(norm, Baseline::Knn.name(), "", Some(k), EvalSet::Remaining, t, rmse(truth, pred)?[t], cv);
                }
            }
        }

        let mut grids = p.grids.clone();
        grids.sort_by_key(|g| (g.n_units(), *g));
        grids.dedup();
        let stages = grids.par_iter().map(|&g| build_stage(cfg, &plan, &prep, g)).collect::<Result<Vec<_>>>()?;
        let mut ns = p.n_neighbors.clone();
        ns.sort_unstable();
        ns.dedup();
        let cells: Vec<(usize, usize)> = (0..stages.len()).flat_map(|s| ns.iter().map(move |&n| (s, n))).collect();

        for &method in &p.methods {
            let scores = cells
                .par_iter()
                .map(|&(s, n)| som_cv(cfg, &plan, &stages[s], &folds, method, n))
                .collect::<Result<Vec<_>>>()?;
            let choice = select_per_target(&scores, names.len()).ok_or_else(|| {
                Error::Config(format!(
                    "labeled set too small: no map cell for {} fits inside the cross-validation folds",
                    method.name()
                ))
            })?;
            let mut cache: HashMap<usize, (Dataset, Option<Dataset>)> = HashMap::new();
            let label = som_method_name(method);
            for (t, &ci) in choice.iter().enumerate() {
                let (s, n) = cells[ci];
                if let Entry::Vacant(e) = cache.entry(ci) {
                    e.insert(som_cell_test(cfg, &plan, &stages[s], method, n)?);
                }
                let (test, rem) = &cache[&ci];
                let size = stages[s].grid.to_string();
                let cv = scores[ci].as_ref().map(|v| v[t]);
                rec.push(norm, &label, &size, Some(n), EvalSet::Test, t, rmse(&y_test, test)?[t], cv);
                if let (Some(pred), Some(truth)) = (rem, y_rem) {
                    rec.push(norm, &label, &size, Some(n), EvalSet::Remaining, t, rmse(truth, pred)?[t], cv);
                }
            }
        }
    }
    Ok(rec.out)
}

/// Regressors fit on the training share of the labeled subset and score the
/// held-out share. Map methods train a map on the unlabeled pool, pick the
/// (grid, N) cell per target by cross-validation over the training anchors,
/// then anchor all training rows and score the held-out share. When labeled
/// rows exist outside the subset they are scored too, as `remaining`.
pub fn run_split_eval(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<EvalReport> {
    cfg.validate()?;
    with_pool(cfg, || {
        let mut records = Vec::new();
        for r in 0..cfg.protocol.repeats {
            records.extend(split_repeat(cfg, inputs, r)?);
        }
        Ok(EvalReport { kind: ReportKind::Split, records })
    })
}

fn loo_repeat(cfg: &ExperimentConfig, inputs: &Inputs, repeat: usize) -> Result<Vec<EvalRecord>> {
    let p = &cfg.protocol;
    let plan = plan_loo(cfg, inputs, repeat)?;
    let y = plan.labeled.targets()?;
    let names = y.columns().to_vec();
    let m = plan.labeled.n_rows();
    let mut rec = Recorder { plan: &plan, names: names.clone(), out: Vec::new() };

    for b in &p.baselines {
        let pred = match b {
            Baseline::Mean => {
                let total: Vec<f64> = column_means(y).iter().map(|v| v * m as f64).collect();
                let rows: Vec<Vec<f64>> =
                    y.rows().map(|r| r.iter().zip(&total).map(|(v, s)| (s - v) / (m - 1) as f64).collect()).collect();
                Dataset::from_rows_named(names.clone(), &rows)?
            }
            Baseline::RandomUniform => {
                random_guess(y, GuessDistribution::Uniform, derive_seed(plan.seed, &[stream::GUESS, 0]), m)?
            }
            Baseline::RandomNormal => {
                random_guess(y, GuessDistribution::Normal, derive_seed(plan.seed, &[stream::GUESS, 1]), m)?
            }
            _ => continue,
        };
        rec.push_all("none", b.name(), EvalSet::Loo, &rmse(y, &pred)?);
    }

    for &kind in &p.normalizers {
        let prep = Prep::fit(cfg, &plan.pool, kind)?;
        let stages = p.grids.par_iter().map(|&g| build_stage(cfg, &plan, &prep, g)).collect::<Result<Vec<_>>>()?;
        for stage in &stages {
            let anchors = anchors_at(&plan, stage, &plan.train)?;
            for &method in &p.methods {
                for &n in &p.n_neighbors {
                    let pcfg = projection_config(cfg, plan.seed, stage.grid, method, n);
                    pcfg.validate(m - 1)?;
                    let rows = (0..m)
                        .into_par_iter()
                        .map(|i| {
                            let rest: Vec<Anchor> =
                                anchors.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a.clone()).collect();
                            Ok(estimate_at(&stage.geo, &rest, stage.units[i], &pcfg)?)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let scores = rmse(y, &Dataset::from_rows_named(names.clone(), &rows)?)?;
                    let size = stage.grid.to_string();
                    for (t, s) in scores.iter().enumerate() {
                        rec.push(kind.name(), &som_method_name(method), &size, Some(n), EvalSet::Loo, t, *s, None);
                    }
                }
            }
        }
    }
    Ok(rec.out)
}

/// Every labeled row is estimated from the others: the map is trained once
/// per repeat, then each row's anchor is withdrawn and the estimate taken at
/// its BMU. Every configured (grid, N, method) cell is reported.
pub fn run_loo_eval(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<EvalReport> {
    cfg.validate()?;
    with_pool(cfg, || {
        let mut records = Vec::new();
        for r in 0..cfg.protocol.repeats {
            records.extend(loo_repeat(cfg, inputs, r)?);
        }
        Ok(EvalReport { kind: ReportKind::Loo, records })
    })
}

fn sweep_repeat(cfg: &ExperimentConfig, inputs: &Inputs, repeat: usize) -> Result<Vec<SweepRecord>> {
    let p = &cfg.protocol;
    let plan = plan_split(cfg, inputs, repeat)?;
    let y = plan.labeled.targets()?;
    let y_test = y.select_rows(&plan.test);
    let preps = p.normalizers.iter().map(|&k| Ok((k, Prep::fit(cfg, &plan.pool, k)?))).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Grid)> = (0..preps.len()).flat_map(|i| p.grids.iter().map(move |&g| (i, g))).collect();
    let per_job = jobs
        .par_iter()
        .map(|&(i, grid)| {
            let (kind, prep) = &preps[i];
            let stage = build_stage(cfg, &plan, prep, grid)?;
            let mut out = Vec::new();
            for &n in &p.n_neighbors {
                for &method in &p.methods {
                    let (test, _) = som_cell_test(cfg, &plan, &stage, method, n)?;
                    for (t, s) in rmse(&y_test, &test)?.into_iter().enumerate() {
                        out.push(SweepRecord {
                            size: grid.to_string(),
                            n,
                            normalizer: kind.name().to_string(),
                            method: method.name().to_string(),
                            target: y.columns()[t].clone(),
                            seed: plan.seed,
                            rmse: s,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

/// Scores every (grid, N, normalizer, method) cell on the held-out split of
/// each repeat, without model selection.
pub fn run_sweep(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<SweepTable> {
    cfg.validate()?;
    with_pool(cfg, || {
        let mut records = Vec::new();
        for r in 0..cfg.protocol.repeats {
            records.extend(sweep_repeat(cfg, inputs, r)?);
        }
        Ok(SweepTable::new(cfg, inputs.target_names().to_vec(), records))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> LabeledTable {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|i| vec![2.0 * i as f64]).collect();
        LabeledTable {
            ids: (0..n).collect(),
            features: Dataset::from_rows(&x).unwrap(),
            targets: Some(Dataset::from_rows_named(vec!["y".into()], &y).unwrap()),
        }
    }

    #[test]
    fn split_of_67_is_53_14() {
        let inputs = Inputs::new(table(67), None).unwrap();
        let plan = plan_split(&ExperimentConfig::default(), &inputs, 0).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (53, 14));
        assert_eq!(plan.pool.n_rows(), 53);
        assert!(plan.remaining.is_none());
    }

    #[test]
    fn labeled_subset_leaves_remaining_rows() {
        let inputs = Inputs::new(table(200), None).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.labeled_size = Some(50);
        let plan = plan_split(&cfg, &inputs, 3).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (40, 10));
        assert_eq!(plan.remaining.as_ref().unwrap().n_rows(), 150);
        assert_eq!(plan.pool.n_rows(), 190);
        let other = plan_split(&cfg, &inputs, 4).unwrap();
        assert_ne!(plan.labeled.ids, other.labeled.ids);
    }

    #[test]
    fn explicit_ids_and_missing_ids() {
        let inputs = Inputs::new(table(30), None).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.labeled_ids = Some((0..20).rev().collect());
        let plan = plan_split(&cfg, &inputs, 0).unwrap();
        assert_eq!(plan.labeled.ids, (0..20).collect::<Vec<_>>());
        cfg.protocol.labeled_ids = Some(vec![99]);
        assert!(plan_split(&cfg, &inputs, 0).is_err());
    }

    #[test]
    fn too_small_for_folds() {
        let inputs = Inputs::new(table(6), None).unwrap();
        assert!(matches!(plan_split(&ExperimentConfig::default(), &inputs, 0), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut t = table(5);
        t.ids[3] = 1;
        assert!(Inputs::new(t, None).is_err());
    }

    #[test]
    fn folds_partition() {
        let f = make_folds(53, 5, 1);
        assert_eq!(f.len(), 5);
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 10 || x.len() == 11));
    }

    #[test]
    fn selection_prefers_earlier_on_ties() {
        let s = vec![None, Some(vec![2.0, 1.0]), Some(vec![2.0, 0.5]), Some(vec![3.0, 0.5])];
        assert_eq!(select_per_target(&s, 2), Some(vec![1, 2]));
        assert_eq!(select_per_target(&[None], 1), None);
    }
}
