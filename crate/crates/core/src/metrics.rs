//! Binary classification metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Predictions at or above this probability count as positive.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("AUC is undefined when all {n} labels are {label}")]
    SingleClassOnly { n: usize, label: u8 },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no predictions to evaluate")]
    Empty,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClassOnly {
            n: labels.len(),
            label: labels[0],
        });
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    let (pos, neg) = check(scores, labels)?;
    let mut wins = 0.0;
    let mut neg_above = 0usize;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i] == 1).count();
        let n = g.len() - p;
        wins += p as f64 * (neg - neg_above - n) as f64 + 0.5 * (p * n) as f64;
        neg_above += n;
    }
    Ok(wins / (pos * neg) as f64)
}

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` over descending score
/// thresholds, tied scores forming a single threshold.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    let (pos, _) = check(scores, labels)?;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i] == 1).count();
        tp += p;
        seen += g.len();
        ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
    }
    Ok(ap)
}

/// Precision and recall with `score >= 0.5` as positive. Precision is 0
/// when nothing is predicted positive.
pub fn precision_recall(scores: &[f64], labels: &[u8]) -> Result<(f64, f64), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= THRESHOLD, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    Ok((ratio(tp, fp), ratio(tp, fneg)))
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn bce(probs: &[f64], labels: &[f64], eps: f64) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc: f64,
    pub aupr: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
    pub loss: f64,
    pub n: usize,
}

impl EvalResult {
    pub fn compute(scores: &[f64], labels: &[u8]) -> Result<EvalResult, MetricsError> {
        let auc = roc_auc(scores, labels)?;
        let aupr = average_precision(scores, labels)?;
        let (precision, recall) = precision_recall(scores, labels)?;
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        Ok(EvalResult {
            auc,
            aupr,
            precision,
            recall,
            threshold: THRESHOLD,
            loss: bce(scores, &y, crate::model::BCE_EPS),
            n: scores.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    /// Average precision by explicit thresholds at every distinct score.
    fn brute_ap(s: &[f64], y: &[u8]) -> f64 {
        let mut th: Vec<f64> = s.to_vec();
        th.sort_by(|a, b| b.total_cmp(a));
        th.dedup();
        let pos = y.iter().filter(|&&l| l == 1).count() as f64;
        let mut prev_r = 0.0;
        let mut ap = 0.0;
        for t in th {
            let tp = s.iter().zip(y).filter(|(&v, &l)| v >= t && l == 1).count() as f64;
            let pp = s.iter().filter(|&&v| v >= t).count() as f64;
            let r = tp / pos;
            ap += (r - prev_r) * tp / pp;
            prev_r = r;
        }
        ap
    }

    #[test]
    fn examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.3], &[1, 1, 0]).unwrap(),
            1.0
        );
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[1, 0, 1]).unwrap(), 0.5);
        let (p, r) = precision_recall(&[0.5; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!((p, r), (0.5, 1.0));
        assert_eq!(precision_recall(&[0.1, 0.2], &[1, 0]).unwrap(), (0.0, 0.0));
        assert_eq!(roc_auc(&[0.3, 0.3], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(MetricsError::SingleClassOnly { n: 2, label: 1 })
        );
        assert!(matches!(
            roc_auc(&[0.1], &[1, 0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(roc_auc(&[], &[]), Err(MetricsError::Empty));
        assert!(EvalResult::compute(&[0.2, 0.4], &[0, 0]).is_err());
    }

    #[test]
    fn bce_values() {
        assert!((bce(&[0.5, 0.5], &[1.0, 0.0], 1e-12) - std::f64::consts::LN_2).abs() < 1e-12);
        let v = bce(&[0.9, 0.2], &[1.0, 0.0], 1e-12);
        assert!((v - 0.164252).abs() < 1e-6);
        assert!((v + (0.9f64.ln() + 0.8f64.ln()) / 2.0).abs() < 1e-15);
        assert!(bce(&[1.0, 0.0], &[1.0, 0.0], 1e-12) < 1e-11);
    }

    #[test]
    fn auc_and_ap_match_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let n = rng.gen_range(2..=50);
            let mut y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            y[0] = 0;
            y[1] = 1;
            // coarse scores force ties
            let s: Vec<f64> = (0..n)
                .map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0)
                .collect();
            assert!((roc_auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs() < 1e-12);
            assert!((average_precision(&s, &y).unwrap() - brute_ap(&s, &y)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn metrics_are_in_unit_interval(s in prop::collection::vec(0.0f64..1.0, 2..40), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut y: Vec<u8> = s.iter().map(|_| rng.gen_range(0..2)).collect();
            y[0] = 0;
            y[1] = 1;
            let r = EvalResult::compute(&s, &y).unwrap();
            for v in [r.auc, r.aupr, r.precision, r.recall] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let flipped: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
            prop_assert!((roc_auc(&flipped, &y).unwrap() - (1.0 - r.auc)).abs() < 1e-12);
        }
    }
}
