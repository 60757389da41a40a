//! The two unilateral anomalies and the 2D anomaly plane they span.
//!
//! `k_e` aggregates original-space distances from a point to its k nearest
//! neighbors. `k_p` aggregates ECDF-space distances to the *same* neighbors;
//! the neighborhood is never recomputed in ECDF space.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecdf::EcdfModel;
use crate::error::{BiknnError, Result};
use crate::knn::{Neighbor, NeighborIndex};
use crate::metric::PNorm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Max,
    Mean,
    Median,
}

impl Aggregator {
    /// Reduce a non-empty list of distances.
    pub fn apply(self, values: &[f64]) -> f64 {
        debug_assert!(!values.is_empty());
        match self {
            Aggregator::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[m]
                } else {
                    0.5 * (v[m - 1] + v[m])
                }
            }
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Max => "max",
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
        })
    }
}

impl FromStr for Aggregator {
    type Err = BiknnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            _ => Err(BiknnError::InvalidParameter(format!(
                "aggregator must be max, mean or median, got {s:?}"
            ))),
        }
    }
}

/// One observation placed in the anomaly plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnomalyPoint {
    pub k_e: f64,
    pub k_p: f64,
}

impl AnomalyPoint {
    pub fn as_array(self) -> [f64; 2] {
        [self.k_e, self.k_p]
    }
}

/// Settings shared by every anomaly-plane computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceConfig {
    pub k: usize,
    pub spatial_agg: Aggregator,
    pub density_agg: Aggregator,
    /// Norm in ECDF space. The original-space norm lives in the index.
    pub p2: PNorm,
}

fn neighbors(
    index: &NeighborIndex,
    x: &[f64],
    k: usize,
    exclude_self: bool,
) -> Result<Vec<Neighbor>> {
    index.query(x, k, exclude_self)
}

pub fn spatial_anomaly(
    index: &NeighborIndex,
    x: &[f64],
    k: usize,
    agg: Aggregator,
    exclude_self: bool,
) -> Result<f64> {
    let nb = neighbors(index, x, k, exclude_self)?;
    let dists: Vec<f64> = nb.iter().map(|n| n.distance).collect();
    Ok(agg.apply(&dists))
}

pub fn density_anomaly(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    x: &[f64],
    k: usize,
    agg: Aggregator,
    p2: PNorm,
    exclude_self: bool,
) -> Result<f64> {
    check_models(index, ecdf)?;
    let nb = neighbors(index, x, k, exclude_self)?;
    let px = ecdf.project(x)?;
    Ok(density_from(index, ecdf, &px, &nb, agg, p2))
}

fn check_models(index: &NeighborIndex, ecdf: &EcdfModel) -> Result<()> {
    if index.dim() != ecdf.dim() {
        return Err(BiknnError::DimensionMismatch {
            expected: index.dim(),
            actual: ecdf.dim(),
        });
    }
    Ok(())
}

fn density_from(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    projected: &[f64],
    nb: &[Neighbor],
    agg: Aggregator,
    p2: PNorm,
) -> f64 {
    let mut buf = vec![0.0; projected.len()];
    let dists: Vec<f64> = nb
        .iter()
        .map(|n| {
            ecdf.project_into(index.point(n.id), &mut buf);
            p2.distance(projected, &buf)
        })
        .collect();
    agg.apply(&dists)
}

/// Both coordinates from one neighbor list.
pub(crate) fn point_from_neighbors(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    x: &[f64],
    nb: &[Neighbor],
    cfg: &SpaceConfig,
) -> AnomalyPoint {
    let dists: Vec<f64> = nb.iter().map(|n| n.distance).collect();
    let mut px = vec![0.0; x.len()];
    ecdf.project_into(x, &mut px);
    AnomalyPoint {
        k_e: cfg.spatial_agg.apply(&dists),
        k_p: density_from(index, ecdf, &px, nb, cfg.density_agg, cfg.p2),
    }
}

/// Anomaly coordinates of an arbitrary (unseen) point; no neighbor is excluded.
pub fn anomaly_point(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    x: &[f64],
    cfg: &SpaceConfig,
) -> Result<AnomalyPoint> {
    check_models(index, ecdf)?;
    let nb = neighbors(index, x, cfg.k, false)?;
    Ok(point_from_neighbors(index, ecdf, x, &nb, cfg))
}

/// Anomaly plane of the indexed training set, each point excluding itself
/// from its own neighborhood. Output order follows the index ids.
pub fn build_space(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    cfg: &SpaceConfig,
) -> Result<Vec<AnomalyPoint>> {
    Ok(build_space_with_neighbors(index, ecdf, cfg)?
        .into_iter()
        .map(|(pt, _)| pt)
        .collect())
}

/// [`build_space`] that also returns the neighbor ids behind each point.
pub fn build_space_with_neighbors(
    index: &NeighborIndex,
    ecdf: &EcdfModel,
    cfg: &SpaceConfig,
) -> Result<Vec<(AnomalyPoint, Vec<usize>)>> {
    check_models(index, ecdf)?;
    let n = index.len();
    if cfg.k == 0 || cfg.k >= n {
        return Err(BiknnError::KOutOfRange {
            k: cfg.k,
            max: n.saturating_sub(1),
        });
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let nb = index.query_excluding(i, cfg.k)?;
            let pt = point_from_neighbors(index, ecdf, index.point(i), &nb, cfg);
            Ok((pt, nb.iter().map(|n| n.id).collect()))
        })
        .collect()
}

/// Fit an index and ECDF on `train` and return its anomaly plane.
pub fn build_space_from(
    train: ArrayView2<'_, f64>,
    k: usize,
    agg: Aggregator,
    p1: PNorm,
    p2: PNorm,
) -> Result<Vec<AnomalyPoint>> {
    let index = NeighborIndex::build(train, p1)?;
    let ecdf = EcdfModel::fit(train)?;
    let cfg = SpaceConfig {
        k,
        spatial_agg: agg,
        density_agg: agg,
        p2,
    };
    build_space(&index, &ecdf, &cfg)
}
