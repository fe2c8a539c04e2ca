//! All-pairs shortest-path distances between SOM units.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::umatrix::UMatrix;

/// Undirected weighted graph in compressed adjacency form.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Panics on a negative or non-finite weight, or an endpoint `>= n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(a, b, w) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) outside a graph of {n} nodes");
            assert!(w >= 0.0 && w.is_finite(), "edge weight {w} must be finite and non-negative");
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for &(a, b, w) in edges {
            for (from, to) in [(a, b), (b, a)] {
                targets[fill[from]] = to;
                weights[fill[from]] = w;
                fill[from] += 1;
            }
        }
        Self { offsets, targets, weights }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Single-source Dijkstra. Unreachable nodes get `f64::INFINITY`.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_nodes()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(State { cost: 0.0, node: source });
        while let Some(State { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for k in self.offsets[node]..self.offsets[node + 1] {
                let next = self.targets[k];
                let c = cost + self.weights[k];
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(State { cost: c, node: next });
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

// Min-heap on cost.
impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense symmetric table of geodesic distances between units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicTable {
    n_units: usize,
    dist: Vec<f64>,
}

impl GeodesicTable {
    /// Runs Dijkstra from every unit over the U-matrix edge graph.
    pub fn from_umatrix(um: &UMatrix) -> Self {
        let edges: Vec<(usize, usize, f64)> = um.edges().into_iter().map(|e| (e.a, e.b, e.weight)).collect();
        let graph = WeightedGraph::from_edges(um.n_units(), &edges);
        let n = um.n_units();
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| graph.dijkstra(s)).collect();
        let mut dist = Vec::with_capacity(n * n);
        for row in rows {
            dist.extend(row);
        }
        // Path sums can differ by an ulp between directions; mirror the upper triangle.
        for u in 0..n {
            for v in 0..u {
                dist[u * n + v] = dist[v * n + u];
            }
        }
        Self { n_units: n, dist }
    }

    pub fn from_dense(n_units: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n_units * n_units {
            return Err(Error::DimensionMismatch { expected: n_units * n_units, got: dist.len() });
        }
        Ok(Self { n_units, dist })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n_units + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.dist[u * self.n_units..(u + 1) * self.n_units]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.dist
    }

    /// Writes the matrix as headerless CSV, one row per source unit.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for u in 0..self.n_units {
            w.write_record(self.row(u).iter().map(|d| d.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
