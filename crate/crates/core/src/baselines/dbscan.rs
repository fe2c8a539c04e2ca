use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_euclidean, Dataset};
use crate::error::{Error, Result};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    /// Neighborhood size (the point itself included) that makes a core point.
    pub min_samples: usize,
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig("eps must be positive".into()));
        }
        if self.min_samples == 0 {
            return Err(Error::InvalidConfig("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

fn region(x: &Dataset, i: usize, eps2: f64) -> Vec<usize> {
    let q = x.row(i);
    x.rows().enumerate().filter(|(_, r)| squared_euclidean(r, q) <= eps2).map(|(j, _)| j).collect()
}

/// Density-based clustering. Points are visited in row order and clusters
/// are numbered from 0 in order of discovery; noise is [`NOISE`].
pub fn dbscan(x: &Dataset, params: &DbscanParams) -> Result<Vec<i64>> {
    params.validate()?;
    x.check_finite()?;
    let n = x.n_rows();
    let eps2 = params.eps * params.eps;
    let is_core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = x.row(i);
            let mut count = 0;
            for r in x.rows() {
                if squared_euclidean(r, q) <= eps2 {
                    count += 1;
                    if count >= params.min_samples {
                        return true;
                    }
                }
            }
            false
        })
        .collect();

    let mut labels = vec![NOISE; n];
    let mut assigned = vec![false; n];
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if assigned[seed] || !is_core[seed] {
            continue;
        }
        assigned[seed] = true;
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for q in region(x, p, eps2) {
                if assigned[q] {
                    continue;
                }
                assigned[q] = true;
                labels[q] = next;
                if is_core[q] {
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub eps: f64,
    pub n_clusters: usize,
    pub largest: usize,
    pub mean: f64,
    pub smallest: usize,
    pub n_outliers: usize,
}

pub fn cluster_stats(eps: f64, labels: &[i64]) -> ClusterStats {
    let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut sizes = vec![0usize; n_clusters];
    let mut n_outliers = 0;
    for &l in labels {
        if l == NOISE {
            n_outliers += 1;
        } else {
            sizes[l as usize] += 1;
        }
    }
    let (largest, smallest, mean) = if n_clusters == 0 {
        (0, 0, 0.0)
    } else {
        (
            *sizes.iter().max().unwrap(),
            *sizes.iter().min().unwrap(),
            sizes.iter().sum::<usize>() as f64 / n_clusters as f64,
        )
    };
    ClusterStats { eps, n_clusters, largest, mean, smallest, n_outliers }
}

pub fn dbscan_sweep(x: &Dataset, eps_list: &[f64], min_samples: usize) -> Result<Vec<ClusterStats>> {
    eps_list.iter().map(|&eps| Ok(cluster_stats(eps, &dbscan(x, &DbscanParams { eps, min_samples })?))).collect()
}

/// CSV with columns `eps,n_clusters,largest,mean,smallest,n_outliers`.
pub fn write_cluster_stats_csv(stats: &[ClusterStats], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eps", "n_clusters", "largest", "mean", "smallest", "n_outliers"])?;
    for s in stats {
        w.write_record(&[
            s.eps.to_string(),
            s.n_clusters.to_string(),
            s.largest.to_string(),
            s.mean.to_string(),
            s.smallest.to_string(),
            s.n_outliers.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
