//! The bilateral kNN estimator.
//!
//! Fitting builds the neighbor index and ECDF on the training matrix, places
//! every training point in the anomaly plane (excluding itself from its own
//! neighborhood) and fits a robust center/scatter to that plane. A point is
//! then scored as
//!
//! ```text
//! S = mu * M + (1 - mu) * W
//! M = Mahalanobis distance of (k_e, k_p) to the robust center
//! W = || (w1 * k_e, w2 * k_p) ||_wp
//! ```
//!
//! Presets: `knn` = (w1 1, w2 0, mu 0) reduces `S` to the kth-NN distance,
//! `biknn1` = (1, 0.25, 0.5), `biknn2` = (0.5, 0.5, 0.5) and
//! `biknn3` = (0, 1, 0), a density-only score.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly_space::{self, Aggregator, AnomalyPoint, SpaceConfig};
use crate::ecdf::EcdfModel;
use crate::error::{BiknnError, Result};
use crate::knn::NeighborIndex;
use crate::metric::PNorm;
use crate::robust_cov::{self, McdMode, RobustLocationScatter};

pub const MODEL_VERSION: &str = "biknn-model/1";
pub const DEFAULT_K: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Knn,
    Biknn1,
    Biknn2,
    Biknn3,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Knn, Preset::Biknn1, Preset::Biknn2, Preset::Biknn3];

    /// `(w1, w2, mu)`.
    pub fn weights(self) -> (f64, f64, f64) {
        match self {
            Preset::Knn => (1.0, 0.0, 0.0),
            Preset::Biknn1 => (1.0, 0.25, 0.5),
            Preset::Biknn2 => (0.5, 0.5, 0.5),
            Preset::Biknn3 => (0.0, 1.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Knn => "knn",
            Preset::Biknn1 => "biknn1",
            Preset::Biknn2 => "biknn2",
            Preset::Biknn3 => "biknn3",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = BiknnError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                BiknnError::InvalidParameter(format!(
                    "unknown preset {s:?} (expected knn, biknn1, biknn2 or biknn3)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiknnParams {
    pub k: usize,
    /// Original-space norm.
    pub p1: PNorm,
    /// ECDF-space norm.
    pub p2: PNorm,
    pub agg: Aggregator,
    /// Overrides `agg` for the density coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agg_p: Option<Aggregator>,
    pub w1: f64,
    pub w2: f64,
    /// Norm of the weighted anomaly vector.
    pub wp: PNorm,
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_fraction: Option<f64>,
    pub mcd_mode: McdMode,
    pub seed: u64,
}

impl Default for BiknnParams {
    fn default() -> Self {
        Self::from_preset(Preset::Biknn1)
    }
}

impl BiknnParams {
    pub fn from_preset(preset: Preset) -> Self {
        let (w1, w2, mu) = preset.weights();
        Self {
            k: DEFAULT_K,
            p1: PNorm::EUCLIDEAN,
            p2: PNorm::EUCLIDEAN,
            agg: Aggregator::Max,
            agg_p: None,
            w1,
            w2,
            wp: PNorm::EUCLIDEAN,
            mu,
            support_fraction: None,
            mcd_mode: McdMode::Fast,
            seed: 0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_weights(mut self, w1: f64, w2: f64, mu: f64) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self.mu = mu;
        self
    }

    pub fn density_agg(&self) -> Aggregator {
        self.agg_p.unwrap_or(self.agg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BiknnError::InvalidParameter(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if !(self.w1 >= 0.0 && self.w1.is_finite() && self.w2 >= 0.0 && self.w2.is_finite()) {
            return bad(format!(
                "weights must be finite and non-negative, got w1={} w2={}",
                self.w1, self.w2
            ));
        }
        if self.w1 == 0.0 && self.w2 == 0.0 && self.mu < 1.0 {
            return bad("w1 and w2 cannot both be zero unless mu = 1".into());
        }
        if let Some(f) = self.support_fraction {
            if !(f > 0.5 && f <= 1.0) {
                return bad(format!("support fraction must lie in (0.5, 1], got {f}"));
            }
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("wp", self.wp)] {
            if let PNorm::Finite(v) = p {
                if v.is_nan() || v < 1.0 {
                    return bad(format!("{name} must be >= 1, got {v}"));
                }
            }
        }
        Ok(())
    }

    fn space_config(&self) -> SpaceConfig {
        SpaceConfig {
            k: self.k,
            spatial_agg: self.agg,
            density_agg: self.density_agg(),
            p2: self.p2,
        }
    }
}

/// Every intermediate quantity behind one score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub coords: AnomalyPoint,
    pub mahalanobis: f64,
    pub weighted: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct BiknnModel {
    params: BiknnParams,
    index: NeighborIndex,
    ecdf: EcdfModel,
    train_space: Vec<AnomalyPoint>,
    robust: RobustLocationScatter,
}

impl BiknnModel {
    pub fn fit(train: ArrayView2<'_, f64>, params: &BiknnParams) -> Result<Self> {
        params.validate()?;
        let n = train.nrows();
        let need = (params.k + 1).max(robust_cov::MIN_POINTS);
        if n < need {
            return Err(BiknnError::TooFewPoints { need, got: n });
        }
        if let Some(v) = train.iter().find(|v| !v.is_finite()) {
            return Err(BiknnError::InvalidParameter(format!(
                "training data must be finite, found {v}"
            )));
        }
        let index = NeighborIndex::build(train, params.p1)?;
        let ecdf = EcdfModel::fit(train)?;
        let train_space = anomaly_space::build_space(&index, &ecdf, &params.space_config())?;
        let plane: Vec<[f64; 2]> = train_space.iter().map(|p| p.as_array()).collect();
        let robust = robust_cov::fast_mcd(
            &plane,
            params.support_fraction,
            params.seed,
            params.mcd_mode,
        )?;
        Ok(Self {
            params: params.clone(),
            index,
            ecdf,
            train_space,
            robust,
        })
    }

    pub fn params(&self) -> &BiknnParams {
        &self.params
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn ecdf(&self) -> &EcdfModel {
        &self.ecdf
    }

    pub fn train_space(&self) -> &[AnomalyPoint] {
        &self.train_space
    }

    pub fn robust(&self) -> &RobustLocationScatter {
        &self.robust
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn n_train(&self) -> usize {
        self.index.len()
    }

    /// Same fitted neighborhoods and robust fit, different combination weights.
    ///
    /// Only `w1`, `w2`, `wp` and `mu` may differ; anything else needs a refit.
    pub fn with_combination(&self, w1: f64, w2: f64, wp: PNorm, mu: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.w1 = w1;
        params.w2 = w2;
        params.wp = wp;
        params.mu = mu;
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(BiknnError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Anomaly coordinates of `x` treated as an unseen point: all training
    /// points, including exact copies of `x`, are eligible neighbors.
    pub fn anomaly_coords(&self, x: &[f64]) -> Result<AnomalyPoint> {
        self.check_dim(x)?;
        anomaly_space::anomaly_point(&self.index, &self.ecdf, x, &self.params.space_config())
    }

    /// Stored (self-excluded) coordinates of training row `id`.
    pub fn train_coords(&self, id: usize) -> Option<AnomalyPoint> {
        self.train_space.get(id).copied()
    }

    pub fn combine(&self, coords: AnomalyPoint) -> ScoreBreakdown {
        let p = &self.params;
        let mahalanobis = self.robust.mahalanobis(coords.as_array());
        let weighted = p.wp.norm([p.w1 * coords.k_e, p.w2 * coords.k_p]);
        ScoreBreakdown {
            coords,
            mahalanobis,
            weighted,
            score: p.mu * mahalanobis + (1.0 - p.mu) * weighted,
        }
    }

    pub fn explain_point(&self, x: &[f64]) -> Result<ScoreBreakdown> {
        Ok(self.combine(self.anomaly_coords(x)?))
    }

    pub fn score_point(&self, x: &[f64]) -> Result<f64> {
        Ok(self.explain_point(x)?.score)
    }

    /// Scores of arbitrary rows, each scored as an unseen point, in input order.
    pub fn score_all(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.dim() {
            return Err(BiknnError::DimensionMismatch {
                expected: self.dim(),
                actual: points.ncols(),
            });
        }
        let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
        rows.par_iter().map(|r| self.score_point(r)).collect()
    }

    /// Scores of the training rows from the fitted (self-excluded) plane.
    pub fn train_scores(&self) -> Vec<f64> {
        self.train_breakdown()
            .into_iter()
            .map(|b| b.score)
            .collect()
    }

    pub fn train_breakdown(&self) -> Vec<ScoreBreakdown> {
        self.train_space.iter().map(|&c| self.combine(c)).collect()
    }

    /// Scores over a `resolution x resolution` lattice spanning `[mins, maxs]`
    /// (corners included). Row-major with x varying fastest.
    pub fn score_grid(
        &self,
        mins: [f64; 2],
        maxs: [f64; 2],
        resolution: usize,
    ) -> Result<Array2<f64>> {
        if self.dim() != 2 {
            return Err(BiknnError::DimensionMismatch {
                expected: 2,
                actual: self.dim(),
            });
        }
        if resolution < 2 {
            return Err(BiknnError::InvalidParameter(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        if !(mins[0] < maxs[0] && mins[1] < maxs[1])
            || mins.iter().chain(&maxs).any(|v| !v.is_finite())
        {
            return Err(BiknnError::InvalidParameter(
                "grid bounds must be finite with min < max on both axes".into(),
            ));
        }
        let axis = |a: usize, i: usize| {
            let t = i as f64 / (resolution - 1) as f64;
            if i == resolution - 1 {
                maxs[a]
            } else {
                mins[a] + t * (maxs[a] - mins[a])
            }
        };
        let values: Vec<f64> = (0..resolution * resolution)
            .into_par_iter()
            .map(|cell| self.score_point(&[axis(0, cell % resolution), axis(1, cell / resolution)]))
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_vec((resolution, resolution), values).expect("square grid"))
    }

    pub fn to_document(&self) -> ModelDocument {
        let s = self.robust.scatter;
        ModelDocument {
            version: MODEL_VERSION.to_owned(),
            params: self.params.clone(),
            center: self.robust.center,
            scatter: [s[0][0], s[0][1], s[1][0], s[1][1]],
            train_space: self.train_space.iter().map(|p| p.as_array()).collect(),
            ecdf: self.ecdf.columns().to_vec(),
            training: self
                .index
                .points()
                .chunks(self.dim())
                .map(<[f64]>::to_vec)
                .collect(),
            support: Some(self.robust.support_indices()),
            raw_determinant: Some(self.robust.raw_determinant),
            consistency_factor: Some(self.robust.consistency_factor),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.version != MODEL_VERSION {
            return Err(BiknnError::Model(format!(
                "unsupported model version {:?} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        doc.params.validate()?;
        let n = doc.training.len();
        let d = doc.training.first().map_or(0, Vec::len);
        if n == 0 || d == 0 || doc.training.iter().any(|r| r.len() != d) {
            return Err(BiknnError::Model(
                "training matrix is empty or ragged".into(),
            ));
        }
        if doc.train_space.len() != n {
            return Err(BiknnError::Model(format!(
                "train_space has {} points for {n} training rows",
                doc.train_space.len()
            )));
        }
        let flat: Vec<f64> = doc.training.into_iter().flatten().collect();
        let train = Array2::from_shape_vec((n, d), flat).expect("checked shape");
        let index = NeighborIndex::build(train.view(), doc.params.p1)?;
        let ecdf = EcdfModel::from_sorted_columns(doc.ecdf)?;
        if ecdf.dim() != d || ecdf.n() != n {
            return Err(BiknnError::Model(
                "ECDF does not match the training matrix".into(),
            ));
        }
        let s = doc.scatter;
        let mut robust =
            RobustLocationScatter::from_parts(doc.center, [[s[0], s[1]], [s[2], s[3]]])?;
        if let Some(support) = doc.support {
            let mut mask = vec![false; n];
            for i in support {
                *mask
                    .get_mut(i)
                    .ok_or_else(|| BiknnError::Model("support index out of range".into()))? = true;
            }
            robust.support = mask;
        }
        robust.raw_determinant = doc.raw_determinant.unwrap_or(f64::NAN);
        robust.consistency_factor = doc.consistency_factor.unwrap_or(1.0);
        Ok(Self {
            params: doc.params,
            index,
            ecdf,
            train_space: doc
                .train_space
                .into_iter()
                .map(|[k_e, k_p]| AnomalyPoint { k_e, k_p })
                .collect(),
            robust,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// Serialized form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    pub params: BiknnParams,
    pub center: [f64; 2],
    /// Row-major 2x2.
    pub scatter: [f64; 4],
    pub train_space: Vec<[f64; 2]>,
    pub ecdf: Vec<Vec<f64>>,
    pub training: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_determinant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency_factor: Option<f64>,
}

/// The `(n - n_outliers)`-th smallest score. Points scoring strictly above it
/// are predicted outliers, so ties at the threshold can flag fewer than
/// `n_outliers` points.
pub fn decision_threshold(scores: &[f64], n_outliers: usize) -> Result<f64> {
    let n = scores.len();
    if n_outliers == 0 || n_outliers >= n {
        return Err(BiknnError::InvalidParameter(format!(
            "number of outliers must lie in [1, {}), got {n_outliers}",
            n
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[n - n_outliers - 1])
}

pub fn predict_outliers(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}
