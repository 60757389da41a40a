//! Minkowski distances for the original space and for ECDF space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{BiknnError, Result};

/// Order of a Minkowski norm: a finite `p >= 1`, or the max-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub const MANHATTAN: PNorm = PNorm::Finite(1.0);
    pub const EUCLIDEAN: PNorm = PNorm::Finite(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(PNorm::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(PNorm::Finite(p))
        } else {
            Err(BiknnError::InvalidParameter(format!(
                "p-norm order must be >= 1 or infinity, got {p}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            PNorm::Finite(p) => p,
            PNorm::Infinity => f64::INFINITY,
        }
    }

    /// Norm of a vector given by its components.
    ///
    /// Components are consumed in order; the reduction for `p = 1, 2` is a
    /// plain left fold so results are reproducible bit for bit.
    #[inline]
    pub fn norm<I: IntoIterator<Item = f64>>(self, components: I) -> f64 {
        let abs = components.into_iter().map(f64::abs);
        match self {
            PNorm::Infinity => abs.fold(0.0, f64::max),
            PNorm::Finite(1.0) => abs.sum(),
            PNorm::Finite(2.0) => abs.map(|v| v * v).sum::<f64>().sqrt(),
            PNorm::Finite(p) => abs.map(|v| v.powf(p)).sum::<f64>().powf(p.recip()),
        }
    }

    /// Distance without length checks. Callers guarantee `a.len() == b.len()`.
    #[inline]
    pub(crate) fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.norm(a.iter().zip(b).map(|(x, y)| x - y))
    }
}

impl Default for PNorm {
    fn default() -> Self {
        PNorm::EUCLIDEAN
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = BiknnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(PNorm::Infinity),
            other => {
                let p: f64 = other.parse().map_err(|_| {
                    BiknnError::InvalidParameter(format!("not a p-norm order: {s:?}"))
                })?;
                PNorm::new(p)
            }
        }
    }
}

// JSON has no infinity, so the max-norm travels as the string "inf".
impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PNorm::Finite(p) => serializer.serialize_f64(*p),
            PNorm::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(deserializer)? {
            Repr::Num(p) => PNorm::new(p),
            Repr::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Minkowski distance `(sum |a_j - b_j|^p)^(1/p)`, or `max_j |a_j - b_j|` for the max-norm.
pub fn minkowski(a: &[f64], b: &[f64], p: PNorm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(BiknnError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if let PNorm::Finite(v) = p {
        if v.is_nan() || v < 1.0 {
            return Err(BiknnError::InvalidParameter(format!(
                "p-norm order must be >= 1, got {v}"
            )));
        }
    }
    Ok(p.distance(a, b))
}
