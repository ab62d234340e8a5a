//! AUC, imputation error and summary statistics.

use crate::error::{MagicError, Result};

/// Mann–Whitney AUC: `(#concordant + ½ #ties) / (n0 n1)`.
///
/// Pair counts are kept as integers in half units, so the result is the
/// exact ratio rounded once.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MagicError::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MagicError::UndefinedMetric("AUC of NaN scores".into()));
    }
    if labels.iter().any(|&z| z > 1) {
        return Err(MagicError::InvalidInput("labels must be 0 or 1".into()));
    }
    let n1 = labels.iter().filter(|&&z| z == 1).count() as u64;
    let n0 = labels.len() as u64 - n1;
    if n0 == 0 || n1 == 0 {
        return Err(MagicError::UndefinedMetric(
            "AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Walk groups of tied scores; each positive gains 2 per negative below
    // it and 1 per tied negative.
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice as f64 / (2 * n0 * n1) as f64)
}

/// Mean squared error over `indices`.
pub fn imputation_mse(imputed: &[f64], truth: &[f64], indices: &[usize]) -> Result<f64> {
    if imputed.len() != truth.len() {
        return Err(MagicError::Dimension {
            expected: truth.len(),
            got: imputed.len(),
        });
    }
    if indices.is_empty() {
        return Err(MagicError::UndefinedMetric("MSE over an empty index set".into()));
    }
    let mut sum = 0.0;
    for &i in indices {
        if i >= truth.len() {
            return Err(MagicError::InvalidInput(format!("index {i} out of range")));
        }
        sum += (imputed[i] - truth[i]).powi(2);
    }
    Ok(sum / indices.len() as f64)
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &zi) in labels.iter().enumerate() {
            for (j, &zj) in labels.iter().enumerate() {
                if zi == 1 && zj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn separation_extremes() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(MagicError::UndefinedMetric(_))));
    }

    #[test]
    fn ties_match_pairwise_count() {
        let s = [0.3, 0.3, 0.5, 0.1, 0.5, 0.9, 0.3, 0.1];
        let z = [1, 0, 0, 1, 1, 1, 0, 0];
        assert_eq!(auc(&s, &z).unwrap(), pairwise(&s, &z));
    }

    #[test]
    fn mse_cases() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(imputation_mse(&t, &t, &[0, 1, 2, 3]).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        assert_eq!(imputation_mse(&shifted, &t, &[1, 3]).unwrap(), 0.25);
        assert!(imputation_mse(&t, &t, &[]).is_err());
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise(
            pairs in prop::collection::vec((0u8..6, 0u8..2), 2..=12)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| f64::from(p.0) / 5.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let both = labels.contains(&0) && labels.contains(&1);
            match auc(&scores, &labels) {
                Ok(a) => prop_assert_eq!(a, pairwise(&scores, &labels)),
                Err(_) => prop_assert!(!both),
            }
        }
    }
}
