//! Comparison methods: least-squares regression, KNN regression, random
//! guessing and DBSCAN clustering.

mod dbscan;
mod knn;
mod least_squares;
mod random_guess;

pub use dbscan::{cluster_stats, dbscan, dbscan_sweep, write_cluster_stats_csv, ClusterStats, DbscanParams, NOISE};
pub use knn::{knn_predict, knn_predict_dataset};
pub use least_squares::{fit_least_squares, fit_least_squares_ridge, predict_ls, LeastSquaresModel, DEFAULT_RIDGE};
pub use random_guess::{random_guess, GuessDistribution};
