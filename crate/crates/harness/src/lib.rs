//! Experiment harness around the `topoproj` library: CSV ingestion, a
//! synthetic spectra generator, split / leave-one-out / sweep protocols and
//! their reports.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod synth;

pub use config::{Baseline, ExperimentConfig, Grid, STANDARD_GRIDS};
pub use data::{load_csv, load_energy_dataset, LabeledTable, Schema};
pub use error::{Error, Result};
pub use experiment::{run_loo_eval, run_split_eval, run_sweep, Inputs};
pub use metrics::rmse;
pub use report::{EvalRecord, EvalReport, EvalSet, RunManifest};
pub use sweep::{SweepRecord, SweepTable};
pub use synth::{generate_synthetic_spectra, SynthData, SynthParams};
