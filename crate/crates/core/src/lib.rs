//! Bilateral kNN anomaly estimation.
//!
//! Every observation is mapped to a point in a two-dimensional anomaly plane:
//! its kNN distance in the original feature space (`k_e`) and the distance, in
//! per-dimension ECDF space, to the *same* neighbors (`k_p`). Scores combine a
//! robust Mahalanobis distance in that plane with a weighted Minkowski norm of
//! the two coordinates.
//!
//! ```no_run
//! use biknn::{Dataset, BiknnParams, BiknnModel, Preset};
//!
//! let ds = Dataset::load_csv("data.csv", Some("label")).unwrap();
//! let params = BiknnParams::from_preset(Preset::Biknn1);
//! let model = BiknnModel::fit(ds.features(), &params).unwrap();
//! let scores = model.score_all(ds.features()).unwrap();
//! # let _ = scores;
//! ```

pub mod anomaly_space;
pub mod classify;
pub mod dataset;
pub mod ecdf;
mod error;
pub mod eval;
pub mod export;
pub mod knn;
pub mod metric;
pub mod robust_cov;
pub mod scorer;

pub use anomaly_space::{Aggregator, AnomalyPoint};
pub use classify::{OutlierType, TypeCounts};
pub use dataset::{Dataset, SplitMode};
pub use ecdf::EcdfModel;
pub use error::{BiknnError, Result};
pub use knn::{Neighbor, NeighborIndex};
pub use metric::PNorm;
pub use robust_cov::{McdMode, RobustLocationScatter};
pub use scorer::{BiknnModel, BiknnParams, Preset, ScoreBreakdown};
