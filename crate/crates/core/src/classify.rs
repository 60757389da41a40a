//! Three-way outlier typing in the anomaly plane.
//!
//! Each axis gets its own threshold (the m-th largest coordinate). Type I is
//! above both, type II above the spatial threshold only, type III above the
//! density threshold only. "Above" means `>=`, so tied coordinates are
//! always labeled alike.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anomaly_space::AnomalyPoint;
use crate::error::{BiknnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutlierType {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "I")]
    TypeI,
    #[serde(rename = "II")]
    TypeII,
    #[serde(rename = "III")]
    TypeIII,
}

impl OutlierType {
    pub fn from_flags(spatial: bool, density: bool) -> Self {
        match (spatial, density) {
            (true, true) => OutlierType::TypeI,
            (true, false) => OutlierType::TypeII,
            (false, true) => OutlierType::TypeIII,
            (false, false) => OutlierType::Normal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutlierType::Normal => "normal",
            OutlierType::TypeI => "I",
            OutlierType::TypeII => "II",
            OutlierType::TypeIII => "III",
        }
    }

    pub fn is_outlier(self) -> bool {
        self != OutlierType::Normal
    }
}

impl fmt::Display for OutlierType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutlierType {
    type Err = BiknnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(OutlierType::Normal),
            "I" => Ok(OutlierType::TypeI),
            "II" => Ok(OutlierType::TypeII),
            "III" => Ok(OutlierType::TypeIII),
            _ => Err(BiknnError::InvalidParameter(format!(
                "unknown outlier type {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeCounts {
    pub normal: usize,
    #[serde(rename = "I")]
    pub type_i: usize,
    #[serde(rename = "II")]
    pub type_ii: usize,
    #[serde(rename = "III")]
    pub type_iii: usize,
}

impl TypeCounts {
    pub fn tally(types: &[OutlierType]) -> Self {
        let mut c = TypeCounts::default();
        for t in types {
            match t {
                OutlierType::Normal => c.normal += 1,
                OutlierType::TypeI => c.type_i += 1,
                OutlierType::TypeII => c.type_ii += 1,
                OutlierType::TypeIII => c.type_iii += 1,
            }
        }
        c
    }
}

fn mth_largest(mut values: Vec<f64>, m: usize) -> f64 {
    values.sort_by(|a, b| b.total_cmp(a));
    values[m - 1]
}

/// `(t_e, t_p)`: the m-th largest `k_e` and the m-th largest `k_p`.
pub fn axis_thresholds(space: &[AnomalyPoint], m: usize) -> Result<(f64, f64)> {
    let n = space.len();
    if m == 0 || m >= n {
        return Err(BiknnError::InvalidParameter(format!(
            "expected outlier count must lie in [1, {n}), got {m}"
        )));
    }
    Ok((
        mth_largest(space.iter().map(|p| p.k_e).collect(), m),
        mth_largest(space.iter().map(|p| p.k_p).collect(), m),
    ))
}

pub fn classify_with_thresholds(space: &[AnomalyPoint], t_e: f64, t_p: f64) -> Vec<OutlierType> {
    space
        .iter()
        .map(|p| OutlierType::from_flags(p.k_e >= t_e, p.k_p >= t_p))
        .collect()
}

pub fn classify(space: &[AnomalyPoint], m: usize) -> Result<Vec<OutlierType>> {
    let (t_e, t_p) = axis_thresholds(space, m)?;
    Ok(classify_with_thresholds(space, t_e, t_p))
}
