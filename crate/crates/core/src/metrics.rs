//! Rank and score fidelity metrics.
//!
//! Every metric returns `Ok(None)` when it is undefined on the input (a
//! zero-variance vector), so callers never see a NaN.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
}

pub type MetricResult = Result<Option<f64>, MetricError>;

fn check_inputs(a: &[f64], b: &[f64], needed: usize) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < needed {
        return Err(MetricError::TooFew {
            needed,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("finite inputs")
}

/// 1-based ranks with tied values sharing the mean of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(&values[a], &values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if is_constant(a) || is_constant(b) {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of midrank vectors.
pub fn spearman_rho(predicted: &[f64], actual: &[f64]) -> MetricResult {
    check_inputs(predicted, actual, 3)?;
    Ok(pearson(&midranks(predicted), &midranks(actual)))
}

/// Pair counts behind Kendall's tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// n(n-1)/2
    pub total: u64,
    /// Pairs tied in the first vector.
    pub ties_first: u64,
    /// Pairs tied in the second vector.
    pub ties_second: u64,
    /// concordant minus discordant
    pub score: i64,
}

impl PairCounts {
    pub fn tau_b(&self) -> Option<f64> {
        let left = self.total - self.ties_first;
        let right = self.total - self.ties_second;
        if left == 0 || right == 0 {
            return None;
        }
        Some(self.score as f64 / ((left as f64) * (right as f64)).sqrt())
    }
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut pairs = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            pairs += run * (run - 1) / 2;
            run = 1;
        }
    }
    pairs + run * (run - 1) / 2
}

/// Counts inversions of `v` while merge-sorting it in place.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Knight's O(n log n) pair counting.
pub fn pair_counts(first: &[f64], second: &[f64]) -> Result<PairCounts, MetricError> {
    check_inputs(first, second, 0)?;
    let n = first.len() as u64;
    let mut pairs: Vec<(f64, f64)> = first.iter().copied().zip(second.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp_f64(&a.0, &b.0).then_with(|| cmp_f64(&a.1, &b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_first = tied_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = merge_count(&mut ys, &mut buf);
    let ties_second = tied_pairs(&ys);

    let total = n * n.saturating_sub(1) / 2;
    let score = total as i64 - ties_first as i64 - ties_second as i64 + joint as i64
        - 2 * discordant as i64;
    Ok(PairCounts {
        total,
        ties_first,
        ties_second,
        score,
    })
}

/// Kendall's tau-b with tie correction.
pub fn kendall_tau_b(predicted: &[f64], actual: &[f64]) -> MetricResult {
    check_inputs(predicted, actual, 3)?;
    Ok(pair_counts(predicted, actual)?.tau_b())
}

/// Coefficient of determination; unbounded below.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> MetricResult {
    check_inputs(predicted, actual, 2)?;
    if is_constant(actual) {
        return Ok(None);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

/// Probability a random pair is ordered correctly, from tau.
pub fn pairwise_accuracy(tau: f64) -> f64 {
    (tau + 1.0) / 2.0
}

/// Rank and score fidelity of one prediction vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTriple {
    pub spearman_rho: Option<f64>,
    pub kendall_tau_b: Option<f64>,
    pub r_squared: Option<f64>,
}

impl MetricTriple {
    /// Too-short inputs yield an all-undefined triple; a length mismatch is an error.
    pub fn compute(predicted: &[f64], actual: &[f64]) -> Result<Self, MetricError> {
        let lift = |r: MetricResult| match r {
            Ok(v) => Ok(v),
            Err(MetricError::TooFew { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            spearman_rho: lift(spearman_rho(predicted, actual))?,
            kendall_tau_b: lift(kendall_tau_b(predicted, actual))?,
            r_squared: lift(r_squared(predicted, actual))?,
        })
    }

    pub fn pairwise_accuracy(&self) -> Option<f64> {
        self.kendall_tau_b.map(pairwise_accuracy)
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::SpearmanRho => self.spearman_rho,
            Metric::KendallTauB => self.kendall_tau_b,
            Metric::RSquared => self.r_squared,
        }
    }

    pub fn is_fully_defined(&self) -> bool {
        self.spearman_rho.is_some() && self.kendall_tau_b.is_some() && self.r_squared.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SpearmanRho,
    KendallTauB,
    RSquared,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::SpearmanRho, Metric::KendallTauB, Metric::RSquared];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SpearmanRho => "spearman_rho",
            Metric::KendallTauB => "kendall_tau_b",
            Metric::RSquared => "r_squared",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_examples() {
        let a = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(spearman_rho(&a, &a).unwrap(), Some(1.0));
        let rev = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(spearman_rho(&rev, &a).unwrap(), Some(-1.0));
        // 1 - 6 * 2 / (5 * 24) = 0.9
        let rho = spearman_rho(&[1.0, 2.0, 3.0, 5.0, 4.0], &[1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap()
            .unwrap();
        assert!((rho - 0.9).abs() < 1e-15);
        assert_eq!(
            spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(),
            None
        );
        assert!(matches!(
            spearman_rho(&[1.0, 2.0], &[1.0, 2.0]),
            Err(MetricError::TooFew { .. })
        ));
    }

    #[test]
    fn kendall_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(kendall_tau_b(&a, &a).unwrap(), Some(1.0));
        let tau = kendall_tau_b(&[1.0, 2.0, 3.0, 5.0, 4.0], &a)
            .unwrap()
            .unwrap();
        assert!((tau - 0.8).abs() < 1e-15);
        assert!((pairwise_accuracy(0.8) - 0.9).abs() < 1e-15);
        assert_eq!(kendall_tau_b(&[2.0, 2.0, 2.0], &a[..3]).unwrap(), None);
    }

    #[test]
    fn r_squared_examples() {
        let y = [0.0, 1.0];
        assert_eq!(r_squared(&y, &y).unwrap(), Some(1.0));
        assert_eq!(r_squared(&[0.5, 0.5], &y).unwrap(), Some(0.0));
        // ss_res = 0.5, ss_tot = 0.5
        assert_eq!(r_squared(&[0.5, 1.5], &y).unwrap(), Some(0.0));
        assert_eq!(r_squared(&[0.1, 0.2], &[0.3, 0.3]).unwrap(), None);
    }

    #[test]
    fn triple_maps_short_inputs_to_undefined() {
        let t = MetricTriple::compute(&[0.1, 0.2], &[0.3, 0.5]).unwrap();
        assert_eq!(t.spearman_rho, None);
        assert!(t.r_squared.is_some());
        assert!(MetricTriple::compute(&[0.1], &[0.3, 0.5]).is_err());
    }
}
