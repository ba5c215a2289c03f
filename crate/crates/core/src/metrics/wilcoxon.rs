use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MetricsError;

/// Largest effective sample size tested exactly by default.
pub const EXACT_THRESHOLD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences (W⁺).
    pub statistic: f64,
    pub n_effective: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Non-zero paired differences with average ranks of their magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    /// Rank of each |d|, ties averaged; parallel to `positive`.
    pub ranks: Vec<f64>,
    pub positive: Vec<bool>,
    /// Sizes of groups of tied magnitudes (groups of one omitted).
    pub ties: Vec<usize>,
}

impl SignedRanks {
    /// Ranks `x − y`, dropping zero differences.
    pub fn from_pairs(x: &[f64], y: &[f64]) -> Result<Self, MetricsError> {
        if x.len() != y.len() {
            return Err(MetricsError::LengthMismatch(x.len(), y.len()));
        }
        let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        Self::from_differences(&diffs)
    }

    pub fn from_differences(diffs: &[f64]) -> Result<Self, MetricsError> {
        let mut items: Vec<(f64, bool)> = diffs
            .iter()
            .filter(|d| **d != 0.0)
            .map(|d| (d.abs(), *d > 0.0))
            .collect();
        if items.is_empty() {
            return Err(MetricsError::AllZeroDifferences);
        }
        if items.iter().any(|(m, _)| m.is_nan()) {
            return Err(MetricsError::NonFinite);
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0));

        let n = items.len();
        let mut ranks = vec![0.0; n];
        let mut ties = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && items[j + 1].0 == items[i].0 {
                j += 1;
            }
            // positions i..=j share ranks (i+1)..=(j+1)
            let avg = (i + j + 2) as f64 / 2.0;
            ranks[i..=j].fill(avg);
            if j > i {
                ties.push(j - i + 1);
            }
            i = j + 1;
        }
        Ok(SignedRanks {
            ranks,
            positive: items.into_iter().map(|(_, p)| p).collect(),
            ties,
        })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn w_plus(&self) -> f64 {
        self.ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, &p)| p)
            .map(|(r, _)| r)
            .sum()
    }
}

/// P(W⁺ ≥ observed) under the null, counting all 2ⁿ sign assignments.
///
/// Average ranks are multiples of ½, so the count runs over doubled
/// integer ranks with a subset-sum table.
pub fn exact_p_greater(sr: &SignedRanks) -> f64 {
    let doubled: Vec<usize> = sr.ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let observed: usize = doubled
        .iter()
        .zip(&sr.positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();

    // counts[s] = number of sign assignments whose doubled W⁺ equals s
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: f64 = counts[observed..].iter().sum();
    tail / 2f64.powi(sr.len() as i32)
}

/// Normal approximation to P(W⁺ ≥ observed) with tie-corrected variance
/// and a continuity correction of ½.
pub fn normal_p_greater(sr: &SignedRanks) -> f64 {
    let n = sr.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_adj: f64 = sr.ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_adj;
    let z = (sr.w_plus() - mean - 0.5) / var.sqrt();
    let std = Normal::standard();
    std.sf(z).max(f64::MIN_POSITIVE)
}

/// One-sided signed-rank test of "x greater than y" with the default
/// exact threshold.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, MetricsError> {
    wilcoxon_one_sided_with(x, y, EXACT_THRESHOLD)
}

pub fn wilcoxon_one_sided_with(x: &[f64], y: &[f64], exact_threshold: usize) -> Result<WilcoxonResult, MetricsError> {
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let sr = SignedRanks::from_pairs(x, y)?;
    let (p_value, method) = if sr.len() <= exact_threshold {
        (exact_p_greater(&sr), WilcoxonMethod::Exact)
    } else {
        (normal_p_greater(&sr), WilcoxonMethod::NormalApproximation)
    };
    Ok(WilcoxonResult {
        statistic: sr.w_plus(),
        n_effective: sr.len(),
        p_value,
        method,
    })
}
