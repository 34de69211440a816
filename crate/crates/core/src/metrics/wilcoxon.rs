//! Two-sided Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest sample size for which the exact null distribution is used
/// (when there are no tied magnitudes).
const EXACT_MAX_N: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// The smaller of the positive and negative rank sums.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs remaining after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks (1-based) of `values`, plus the tie-group sizes.
fn rank_with_ties(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        for &idx in &order[k..end] {
            ranks[idx] = avg;
        }
        if end - k > 1 {
            ties.push(end - k);
        }
        k = end;
    }
    (ranks, ties)
}

/// `P(W+ <= w)` for `n` untied ranks, by counting subsets of `1..=n` with
/// each rank sum.
fn exact_cdf(n: usize, w: f64) -> f64 {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(n as i32);
    let upto = w.floor() as usize;
    counts[..=upto.min(max)].iter().sum::<f64>() / total
}

/// Tests whether paired differences `x - y` are symmetric about zero.
/// Zero differences are discarded. Uses the exact distribution for up to
/// 50 pairs without ties, otherwise the normal approximation with tie
/// correction and no continuity correction.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!("paired samples of lengths {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite paired difference".into()));
    }
    let n = d.len();
    if n == 0 {
        return Err(Error::Undefined("all paired differences are zero".into()));
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = rank_with_ties(&mags);
    let plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let stat = plus.min(total - plus);
    if n <= EXACT_MAX_N && ties.is_empty() {
        let p = (2.0 * exact_cdf(n, stat)).min(1.0);
        return Ok(WilcoxonResult { statistic: stat, p_value: p, n, exact: true });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (stat - mean) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.cdf(z)).min(1.0)
    };
    Ok(WilcoxonResult { statistic: stat, p_value: p, n, exact: false })
}
