//! Ranking metrics and the repeated-split benchmark.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitMode};
use crate::error::{BiknnError, Result};
use crate::scorer::{BiknnModel, BiknnParams};

fn check_pair(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(BiknnError::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(BiknnError::Empty("no scores"));
    }
    Ok(())
}

/// Tie-corrected Mann-Whitney estimate of P(score_pos > score_neg).
///
/// Computed from mid-ranks in doubled integer arithmetic, so the result is
/// exactly `(#wins + #ties / 2) / (P * N)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_pair(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(BiknnError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the sum of positive mid-ranks (ranks are 1-based)
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_group = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Descending-score ranking, ties broken by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Step-wise average precision: mean of precision@rank over the positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_pair(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(BiknnError::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, i) in ranking(scores).into_iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Fraction of positives among the `n_top` highest scores.
pub fn precision_at_n(scores: &[f64], labels: &[u8], n_top: usize) -> Result<f64> {
    check_pair(scores, labels)?;
    if n_top == 0 || n_top > scores.len() {
        return Err(BiknnError::InvalidParameter(format!(
            "n_top must lie in [1, {}], got {n_top}",
            scores.len()
        )));
    }
    let hits = ranking(scores)
        .into_iter()
        .take(n_top)
        .filter(|&i| labels[i] == 1)
        .count();
    Ok(hits as f64 / n_top as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub dataset: String,
    pub params_name: String,
    pub params: BiknnParams,
    pub seeds: Vec<u64>,
    pub roc_auc: Vec<f64>,
    pub ap: Vec<f64>,
    pub precision_at_n: Vec<f64>,
    pub seconds: Vec<f64>,
    pub mean_roc_auc: f64,
    pub mean_ap: f64,
    pub mean_precision_at_n: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub trials: usize,
    pub train_fraction: f64,
    pub base_seed: u64,
    pub split_mode: SplitMode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            train_fraction: 0.6,
            base_seed: 0,
            split_mode: SplitMode::Stratified,
        }
    }
}

struct Trial {
    roc_auc: f64,
    ap: f64,
    precision_at_n: f64,
    seconds: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_trial(ds: &Dataset, params: &BiknnParams, cfg: &BenchConfig, seed: u64) -> Result<Trial> {
    let (train, test) = ds.split_with(cfg.train_fraction, seed, cfg.split_mode)?;
    let labels = test.labels().ok_or(BiknnError::Unlabeled)?;
    let clock = Instant::now();
    let model = BiknnModel::fit(train.features(), params)?;
    let scores = model.score_all(test.features())?;
    let seconds = clock.elapsed().as_secs_f64();
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    Ok(Trial {
        roc_auc: roc_auc(&scores, labels)?,
        ap: average_precision(&scores, labels)?,
        precision_at_n: precision_at_n(&scores, labels, n_pos.max(1))?,
        seconds,
    })
}

/// For every (dataset, params) pair and trial `t`, split with seed
/// `base_seed + t`, fit on the training part and evaluate on the test part.
pub fn run_benchmark(
    datasets: &[(String, Dataset)],
    params_list: &[(String, BiknnParams)],
    cfg: &BenchConfig,
) -> Result<Vec<TrialReport>> {
    if cfg.trials == 0 {
        return Err(BiknnError::InvalidParameter(
            "trials must be at least 1".into(),
        ));
    }
    for (name, ds) in datasets {
        let labels = ds.labels().ok_or(BiknnError::Unlabeled)?;
        if !labels.contains(&1) || !labels.contains(&0) {
            return Err(BiknnError::InvalidParameter(format!(
                "dataset {name} needs both normal and outlier labels"
            )));
        }
    }
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| cfg.base_seed + t).collect();
    let mut reports = Vec::new();
    for (ds_name, ds) in datasets {
        for (p_name, params) in params_list {
            let trials: Vec<Trial> = seeds
                .par_iter()
                .map(|&seed| run_trial(ds, params, cfg, seed))
                .collect::<Result<_>>()?;
            let col = |f: fn(&Trial) -> f64| trials.iter().map(f).collect::<Vec<_>>();
            let (auc, ap, pan, secs) = (
                col(|t| t.roc_auc),
                col(|t| t.ap),
                col(|t| t.precision_at_n),
                col(|t| t.seconds),
            );
            reports.push(TrialReport {
                dataset: ds_name.clone(),
                params_name: p_name.clone(),
                params: params.clone(),
                seeds: seeds.clone(),
                mean_roc_auc: mean(&auc),
                mean_ap: mean(&ap),
                mean_precision_at_n: mean(&pan),
                mean_seconds: mean(&secs),
                roc_auc: auc,
                ap,
                precision_at_n: pan,
                seconds: secs,
            });
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(roc_auc(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&s, &[1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.3; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&s, &[1, 1, 1, 1]),
            Err(BiknnError::SingleClass)
        ));
        assert!(roc_auc(&s, &[1, 0]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(),
            1.0
        );
        let ap = average_precision(&[0.9, 0.8, 0.7], &[0, 1, 1]).unwrap();
        assert!((ap - 7.0 / 12.0).abs() < 1e-15);
        let last = average_precision(&[5.0, 4.0, 3.0, 2.0, 1.0], &[0, 0, 0, 0, 1]).unwrap();
        assert!((last - 0.2).abs() < 1e-15);
        assert!(matches!(
            average_precision(&[1.0], &[0]),
            Err(BiknnError::NoPositives)
        ));
    }

    #[test]
    fn precision_at_n_examples() {
        assert_eq!(
            precision_at_n(&[3.0, 2.0, 1.0], &[1, 0, 1], 2).unwrap(),
            0.5
        );
        assert_eq!(
            precision_at_n(&[3.0, 2.0, 1.0], &[1, 1, 0], 2).unwrap(),
            1.0
        );
        assert!(
            (precision_at_n(&[0.4, 0.1, 0.9], &[1, 0, 0], 3).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
        assert!(precision_at_n(&[1.0], &[1], 2).is_err());
        assert!(precision_at_n(&[1.0], &[1], 0).is_err());
    }

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        wins += 1;
                    } else if scores[i] == scores[j] {
                        ties += 1;
                    }
                }
            }
        }
        (wins as f64 + 0.5 * ties as f64) / pairs as f64
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec((0i32..8).prop_map(f64::from), n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_is_rank_only((s, l) in scored_labels()) {
            prop_assume!(l.contains(&0) && l.contains(&1));
            let auc = roc_auc(&s, &l).unwrap();
            prop_assert_eq!(auc, pairwise_auc(&s, &l));
            let warped: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() + 2.0).collect();
            prop_assert_eq!(roc_auc(&warped, &l).unwrap(), auc);
            let ap = average_precision(&s, &l).unwrap();
            prop_assert_eq!(average_precision(&warped, &l).unwrap(), ap);
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }

        #[test]
        fn auc_of_negated_scores(n in 2usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let mut l: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            l[0] = 0;
            l[1] = 1;
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let total = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    fn toy(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let feats = Array2::from_shape_fn((n, 2), |(i, _)| {
            if i < 8 {
                rng.random_range(4.0..6.0)
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let labels = (0..n).map(|i| u8::from(i < 8)).collect();
        Dataset::from_features(feats)
            .unwrap()
            .with_labels(labels)
            .unwrap()
    }

    #[test]
    fn benchmark_report_shape_and_determinism() {
        let data = vec![("toy".to_string(), toy(1))];
        let params = vec![("p".to_string(), BiknnParams::default().with_k(10))];
        let cfg = BenchConfig {
            trials: 3,
            base_seed: 5,
            ..Default::default()
        };
        let a = run_benchmark(&data, &params, &cfg).unwrap();
        let b = run_benchmark(&data, &params, &cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].seeds, vec![5, 6, 7]);
        assert_eq!(a[0].roc_auc, b[0].roc_auc);
        assert_eq!(a[0].ap, b[0].ap);
        assert!((a[0].mean_roc_auc - mean(&a[0].roc_auc)).abs() < 1e-15);
        assert!(a[0].mean_roc_auc > 0.9);

        let one = run_benchmark(
            &data,
            &params,
            &BenchConfig {
                trials: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(one[0].mean_roc_auc, one[0].roc_auc[0]);
    }

    #[test]
    fn benchmark_rejects_bad_input() {
        let params = vec![("p".to_string(), BiknnParams::default().with_k(10))];
        let unlabeled = Dataset::from_features(Array2::zeros((50, 2))).unwrap();
        let cfg = BenchConfig::default();
        assert!(matches!(
            run_benchmark(&[("u".into(), unlabeled)], &params, &cfg),
            Err(BiknnError::Unlabeled)
        ));
        let big_k = vec![("p".to_string(), BiknnParams::default().with_k(100))];
        assert!(run_benchmark(&[("toy".into(), toy(2))], &big_k, &cfg).is_err());
        let zero = BenchConfig { trials: 0, ..cfg };
        assert!(run_benchmark(&[("toy".into(), toy(2))], &params, &zero).is_err());
    }
}
