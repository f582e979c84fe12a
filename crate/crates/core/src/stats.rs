//! Small statistics helpers shared by metrics, calibration checks and the arena.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// z value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Mean and 95% normal-approximation half-width (`1.96 · s / √n`, sample sd).
pub fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z95 * var.sqrt() / (n as f64).sqrt())
}

/// Mixes a base seed with indices into an independent 64-bit seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        x = x.wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Area under the ROC curve from the Mann–Whitney rank statistic, with tied
/// scores sharing their average rank. `None` if only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: positions i..=j share (i+1 + j+1)/2
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-squared goodness of fit of binary outcomes against predicted
/// probabilities, grouped into equal-width probability buckets:
/// `Σ_b (O_b − E_b)² / Σ_{i∈b} p_i(1 − p_i)` on one degree of freedom per
/// non-empty bucket.
pub fn calibration_chi_squared(probs: &[f64], labels: &[bool], buckets: usize) -> Calibration {
    assert_eq!(probs.len(), labels.len());
    let mut observed = vec![0.0; buckets];
    let mut expected = vec![0.0; buckets];
    let mut variance = vec![0.0; buckets];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ((p * buckets as f64) as usize).min(buckets - 1);
        observed[b] += if y { 1.0 } else { 0.0 };
        expected[b] += p;
        variance[b] += p * (1.0 - p);
    }
    let mut statistic = 0.0;
    let mut dof = 0;
    for b in 0..buckets {
        if variance[b] > 0.0 {
            statistic += (observed[b] - expected[b]).powi(2) / variance[b];
            dof += 1;
        }
    }
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
    };
    Calibration {
        statistic,
        dof,
        p_value,
    }
}

/// Pearson chi-squared test of observed counts against equal expected counts.
pub fn uniformity_chi_squared(counts: &[u64]) -> Calibration {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let statistic = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let dof = counts.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic);
    Calibration {
        statistic,
        dof,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_matches_reference_formula() {
        let xs = [0.2, 0.4, 0.6, 0.8, 1.0];
        let (m, h) = mean_ci(&xs);
        assert!((m - 0.6).abs() < 1e-12);
        // sample sd = sqrt(0.1), half width = 1.96 * sqrt(0.1) / sqrt(5)
        let expected = 1.96 * 0.1f64.sqrt() / 5f64.sqrt();
        assert!((h - expected).abs() < 1e-12);
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]), Some(0.0));
        assert_eq!(auc(&[0.3, 0.4], &[true, true]), None);
        // one tie across classes counts half
        let a = auc(&[0.1, 0.5, 0.5, 0.9], &[false, false, true, true]).unwrap();
        assert!((a - 0.875).abs() < 1e-12);
    }

    #[test]
    fn calibration_detects_miscalibration() {
        let probs: Vec<f64> = (0..1000).map(|i| (i % 10) as f64 / 10.0 + 0.05).collect();
        // deterministic labels matching each bucket's rate exactly
        let honest: Vec<bool> = (0..1000).map(|i| (i / 10) % 10 < i % 10 || ((i / 10) % 10 == i % 10 && i / 100 < 5)).collect();
        assert!(calibration_chi_squared(&probs, &honest, 10).p_value > 0.5);
        let wrong = vec![true; 1000];
        assert!(calibration_chi_squared(&probs, &wrong, 10).p_value < 1e-6);
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&xs, 0.95), 5.0);
        assert_eq!(percentile(&xs, 0.5), 3.0);
    }
}
