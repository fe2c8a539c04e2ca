//! Minimally supervised parameter prediction with self-organizing maps.
//!
//! A map is trained on plentiful unlabeled data. The few labeled samples
//! are pinned to their best-matching units, and targets for any unit are
//! estimated from the labeled anchors nearest to it along shortest paths
//! over the map's U-matrix.

pub mod baselines;
pub mod bundle;
pub mod dataset;
pub mod error;
pub mod geodesic;
pub mod preprocess;
pub mod projection;
pub mod seed;
pub mod som;
pub mod umatrix;

pub use bundle::{FitSpec, ModelBundle};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use geodesic::GeodesicTable;
pub use preprocess::{Normalizer, NormalizerKind, PcaModel};
pub use projection::{Anchor, EstimationTable, Method, ProjectionConfig};
pub use som::{Som, SomConfig};
pub use umatrix::UMatrix;
