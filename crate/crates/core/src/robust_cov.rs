//! Minimum covariance determinant (MCD) location/scatter for 2D anomaly points.
//!
//! [`fast_mcd`] runs the usual randomized search: many 3-point starts, two
//! concentration steps each, then the best few iterated to convergence.
//! [`McdMode::Exact`] enumerates every h-subset instead; it is only allowed
//! for small inputs and serves as the reference for the randomized search.
//!
//! Subset covariances use the `1/h` (maximum-likelihood) normalization. The
//! final scatter is rescaled so that it is consistent for Gaussian inliers.

use std::cmp::Ordering;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BiknnError, Result};

/// Median of the chi-squared distribution with 2 degrees of freedom.
///
/// Its CDF is `1 - exp(-x/2)`, so the median solves `exp(-x/2) = 1/2`.
pub const CHI2_2DF_MEDIAN: f64 = 2.0 * std::f64::consts::LN_2;

/// Determinants below this are treated as singular and regularized.
pub const SINGULAR_DET: f64 = 1e-24;

pub const N_STARTS: usize = 500;
pub const INITIAL_C_STEPS: usize = 2;
pub const N_REFINED: usize = 10;
pub const MAX_C_STEPS: usize = 100;
pub const DET_TOL: f64 = 1e-12;
pub const EXACT_MAX_POINTS: usize = 20;
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McdMode {
    #[default]
    Fast,
    Exact,
}

/// Mean and covariance of a 2D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Gaussian2 {
    /// Maximum-likelihood estimate over `points[subset]`.
    pub fn of_subset(points: &[[f64; 2]], subset: &[usize]) -> Self {
        let h = subset.len() as f64;
        let mut mean = [0.0; 2];
        for &i in subset {
            mean[0] += points[i][0];
            mean[1] += points[i][1];
        }
        mean[0] /= h;
        mean[1] /= h;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &i in subset {
            let dx = points[i][0] - mean[0];
            let dy = points[i][1] - mean[1];
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        Self {
            mean,
            cov: [[sxx / h, sxy / h], [sxy / h, syy / h]],
        }
    }

    pub fn det(&self) -> f64 {
        det2(&self.cov)
    }

    fn is_singular(&self) -> bool {
        self.det().is_nan() || self.det() < SINGULAR_DET
    }

    /// Adds `1e-9 * trace / 2` to the diagonal when the determinant is
    /// (numerically) zero; falls back to `1e-9` when the trace is zero too.
    pub fn regularized(mut self) -> (Self, bool) {
        if !self.is_singular() {
            return (self, false);
        }
        let trace = self.cov[0][0] + self.cov[1][1];
        let eps = if trace > 0.0 {
            1e-9 * trace / 2.0
        } else {
            1e-9
        };
        self.cov[0][0] += eps;
        self.cov[1][1] += eps;
        (self, true)
    }

    pub fn sq_mahalanobis(&self, v: [f64; 2]) -> f64 {
        sq_mahalanobis(&self.mean, &self.cov, v)
    }
}

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn sq_mahalanobis(center: &[f64; 2], cov: &[[f64; 2]; 2], v: [f64; 2]) -> f64 {
    let dx = v[0] - center[0];
    let dy = v[1] - center[1];
    let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
    ((c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det2(cov)).max(0.0)
}

/// The `h` points closest to `g` in Mahalanobis distance, ties to lower index,
/// returned in ascending index order.
fn closest(points: &[[f64; 2]], g: &Gaussian2, h: usize) -> Vec<usize> {
    let mut ranked: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &v)| (g.sq_mahalanobis(v), i))
        .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if h < ranked.len() {
        ranked.select_nth_unstable_by(h - 1, by_dist);
        ranked.truncate(h);
    }
    let mut out: Vec<usize> = ranked.into_iter().map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

fn concentrate(points: &[[f64; 2]], subset: &[usize], h: usize) -> Vec<usize> {
    let (g, _) = Gaussian2::of_subset(points, subset).regularized();
    closest(points, &g, h)
}

fn check_subset(points: &[[f64; 2]], subset: &[usize]) -> Result<()> {
    if subset.len() < 3 {
        return Err(BiknnError::InvalidParameter(format!(
            "C-step subsets need at least 3 points, got {}",
            subset.len()
        )));
    }
    if subset.len() > points.len() {
        return Err(BiknnError::TooFewPoints {
            need: subset.len(),
            got: points.len(),
        });
    }
    let mut seen = vec![false; points.len()];
    for &i in subset {
        if i >= points.len() || std::mem::replace(&mut seen[i], true) {
            return Err(BiknnError::InvalidParameter(format!(
                "subset index {i} is out of range or repeated"
            )));
        }
    }
    Ok(())
}

/// One concentration step: fit the subset, keep the `h = |subset|` points
/// with the smallest Mahalanobis distances to that fit.
///
/// The covariance determinant of the returned subset never exceeds that of
/// the input subset. Singular subset covariances are diagonal-regularized
/// before distances are taken.
pub fn c_step(points: &[[f64; 2]], subset: &[usize]) -> Result<Vec<usize>> {
    check_subset(points, subset)?;
    Ok(concentrate(points, subset, subset.len()))
}

/// Result of iterating C-steps from one start.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub support: Vec<usize>,
    pub determinant: f64,
    /// Determinant after every step, starting with the input subset.
    pub history: Vec<f64>,
}

/// Iterate [`c_step`] until the subset repeats, the determinant stops moving
/// (relative change below [`DET_TOL`]), or `max_steps` steps have run.
pub fn refine(points: &[[f64; 2]], start: &[usize], max_steps: usize) -> Result<Refinement> {
    check_subset(points, start)?;
    let mut support = start.to_vec();
    support.sort_unstable();
    let mut det = Gaussian2::of_subset(points, &support).det();
    let mut history = vec![det];
    run_c_steps(
        points,
        &mut support,
        &mut det,
        max_steps,
        Some(&mut history),
    );
    Ok(Refinement {
        support,
        determinant: det,
        history,
    })
}

fn run_c_steps(
    points: &[[f64; 2]],
    support: &mut Vec<usize>,
    det: &mut f64,
    max_steps: usize,
    mut history: Option<&mut Vec<f64>>,
) {
    let h = support.len();
    for _ in 0..max_steps {
        let next = concentrate(points, support, h);
        let next_det = Gaussian2::of_subset(points, &next).det();
        if let Some(hist) = history.as_deref_mut() {
            hist.push(next_det);
        }
        let unchanged = next == *support;
        let stalled = (*det - next_det).abs() <= DET_TOL * det.abs();
        if next_det > *det {
            break;
        }
        *support = next;
        *det = next_det;
        if unchanged || stalled {
            break;
        }
    }
}

/// Robust center and scatter of the anomaly plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustLocationScatter {
    pub center: [f64; 2],
    /// Symmetric positive definite, consistency-rescaled.
    pub scatter: [[f64; 2]; 2],
    /// Membership of each input point in the minimizing subset.
    pub support: Vec<bool>,
    /// Determinant of the unscaled ML covariance over the support.
    pub raw_determinant: f64,
    pub consistency_factor: f64,
    /// True when regularization was needed (collinear or identical points).
    pub degenerate: bool,
}

impl RobustLocationScatter {
    /// Rebuild from a stored center/scatter, checking positive definiteness.
    pub fn from_parts(center: [f64; 2], scatter: [[f64; 2]; 2]) -> Result<Self> {
        let sym = scatter[0][1] == scatter[1][0];
        if !(sym && scatter[0][0] > 0.0 && det2(&scatter) > 0.0)
            || center.iter().any(|v| !v.is_finite())
        {
            return Err(BiknnError::Model(
                "scatter must be a finite symmetric positive definite 2x2 matrix".into(),
            ));
        }
        Ok(Self {
            center,
            scatter,
            support: Vec::new(),
            raw_determinant: f64::NAN,
            consistency_factor: 1.0,
            degenerate: false,
        })
    }

    pub fn mahalanobis(&self, v: [f64; 2]) -> f64 {
        sq_mahalanobis(&self.center, &self.scatter, v).sqrt()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        self.support
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Eigenvalues of the scatter, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, b, c) = (self.scatter[0][0], self.scatter[0][1], self.scatter[1][1]);
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        // product form keeps the small eigenvalue accurate
        let big = mid + rad;
        [det2(&self.scatter) / big, big]
    }
}

/// Subset size for `m` points: `max(floor(m * fraction), floor((m + 3) / 2))`,
/// or just the latter when no fraction is given.
pub fn support_size(m: usize, support_fraction: Option<f64>) -> Result<usize> {
    let base = (m + 3) / 2;
    let h = match support_fraction {
        None => base,
        Some(f) if f > 0.5 && f <= 1.0 => ((m as f64 * f).floor() as usize).max(base),
        Some(f) => {
            return Err(BiknnError::InvalidParameter(format!(
                "support fraction must lie in (0.5, 1], got {f}"
            )))
        }
    };
    Ok(h.min(m))
}

fn by_det_then_lex(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

pub fn fast_mcd(
    points: &[[f64; 2]],
    support_fraction: Option<f64>,
    seed: u64,
    mode: McdMode,
) -> Result<RobustLocationScatter> {
    let m = points.len();
    if m < MIN_POINTS {
        return Err(BiknnError::TooFewPoints {
            need: MIN_POINTS,
            got: m,
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(BiknnError::InvalidParameter(
            "anomaly points must be finite".into(),
        ));
    }
    let h = support_size(m, support_fraction)?;
    let support = match mode {
        McdMode::Exact => exact_support(points, h)?,
        McdMode::Fast => fast_support(points, h, seed),
    };
    Ok(finalize(points, &support))
}

fn exact_support(points: &[[f64; 2]], h: usize) -> Result<Vec<usize>> {
    let m = points.len();
    if m > EXACT_MAX_POINTS {
        return Err(BiknnError::InvalidParameter(format!(
            "exact MCD enumerates all subsets and is limited to {EXACT_MAX_POINTS} points, got {m}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    // Combinations arrive in lexicographic order; a strict improvement keeps
    // the lexicographically smallest of equal-determinant subsets.
    for subset in (0..m).combinations(h) {
        let det = Gaussian2::of_subset(points, &subset).det();
        if best.as_ref().is_none_or(|(b, _)| det < *b) {
            best = Some((det, subset));
        }
    }
    Ok(best.expect("at least one subset").1)
}

fn fast_support(points: &[[f64; 2]], h: usize, seed: u64) -> Vec<usize> {
    let m = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start_seeds: Vec<u64> = (0..N_STARTS).map(|_| rng.random()).collect();

    let mut candidates: Vec<(f64, Vec<usize>)> = start_seeds
        .par_iter()
        .map(|&s| {
            let start = initial_subset(points, s);
            let mut support = concentrate(points, &start, h);
            for _ in 1..INITIAL_C_STEPS {
                support = concentrate(points, &support, h);
            }
            (Gaussian2::of_subset(points, &support).det(), support)
        })
        .collect();
    candidates.sort_by(by_det_then_lex);
    candidates.dedup_by(|a, b| a.1 == b.1);
    candidates.truncate(N_REFINED);

    let refined: Vec<(f64, Vec<usize>)> = candidates
        .into_par_iter()
        .map(|(mut det, mut support)| {
            run_c_steps(points, &mut support, &mut det, MAX_C_STEPS, None);
            (det, support)
        })
        .collect();
    let best = refined
        .into_iter()
        .min_by(by_det_then_lex)
        .expect("at least one start");
    debug_assert_eq!(best.1.len(), h.min(m));
    best.1
}

/// Random 3-point subset, grown one random point at a time while its
/// covariance stays singular.
fn initial_subset(points: &[[f64; 2]], seed: u64) -> Vec<usize> {
    let m = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..m).collect();
    let mut taken = 0;
    let draw = |pool: &mut Vec<usize>, taken: &mut usize, rng: &mut ChaCha8Rng| {
        let j = rng.random_range(*taken..m);
        pool.swap(*taken, j);
        *taken += 1;
    };
    for _ in 0..3 {
        draw(&mut pool, &mut taken, &mut rng);
    }
    while taken < m && Gaussian2::of_subset(points, &pool[..taken]).is_singular() {
        draw(&mut pool, &mut taken, &mut rng);
    }
    let mut subset = pool[..taken].to_vec();
    subset.sort_unstable();
    subset
}

fn finalize(points: &[[f64; 2]], support: &[usize]) -> RobustLocationScatter {
    let raw = Gaussian2::of_subset(points, support);
    let raw_determinant = raw.det();
    let (g, mut degenerate) = raw.regularized();

    let mut d2: Vec<f64> = points.iter().map(|&v| g.sq_mahalanobis(v)).collect();
    d2.sort_by(f64::total_cmp);
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 {
        d2[mid]
    } else {
        0.5 * (d2[mid - 1] + d2[mid])
    };
    let factor = median / CHI2_2DF_MEDIAN;
    let consistency_factor = if factor.is_finite() && factor > 0.0 {
        factor
    } else {
        1.0
    };
    let scaled = Gaussian2 {
        mean: g.mean,
        cov: g.cov.map(|row| row.map(|v| v * consistency_factor)),
    };
    let (scaled, again) = scaled.regularized();
    degenerate |= again;

    let mut mask = vec![false; points.len()];
    for &i in support {
        mask[i] = true;
    }
    RobustLocationScatter {
        center: scaled.mean,
        scatter: scaled.cov,
        support: mask,
        raw_determinant,
        consistency_factor,
        degenerate,
    }
}
