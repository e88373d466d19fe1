//! Two-sided Wilcoxon signed-rank test on paired series.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

/// Largest number of non-zero pairs handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;
/// Fewest non-zero pairs accepted.
pub const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Rank sum of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
}

/// Mid-ranks of `values` (1-based), and the sizes of tied groups.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Exact two-sided p-value: the null distribution of the positive rank sum
/// is enumerated over all sign patterns by dynamic programming on doubled
/// (integer) mid-ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
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
    let observed = (2.0 * w_plus).round() as usize;
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=observed].iter().sum();
    let upper: f64 = counts[observed..].iter().sum();
    (2.0 * lower.min(upper) / all).min(1.0)
}

fn normal_p(n: usize, ties: &[usize], w_plus: f64) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_plus - mean) / var.sqrt();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * std.cdf(-z.abs())).min(1.0)
}

/// Signed-rank test of `a - b`. Zero differences are dropped and ties get
/// mid-ranks; exact for at most [`EXACT_MAX_N`] pairs, otherwise the normal
/// approximation with tie correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignificanceResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        if !d.is_finite() {
            return Err(EvalError::NonFinite(i));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(EvalError::TooFewPairs {
            needed: MIN_PAIRS,
            got: n,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = mid_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w_plus), TestMethod::Exact)
    } else {
        (normal_p(n, &ties, w_plus), TestMethod::NormalApproximation)
    };
    Ok(SignificanceResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value,
        method,
        n_effective: n,
    })
}
