use std::cmp::Ordering;
use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc;

use super::{check_finite, StatsError, TestStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub tau_b: Option<f64>,
    pub p_raw: Option<f64>,
    pub n: usize,
    pub status: TestStatus,
}

impl CorrelationResult {
    fn refused(n: usize, status: TestStatus) -> Self {
        Self { tau_b: None, p_raw: None, n, status }
    }
}

/// Pair and tie statistics of a paired sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub n: u64,
    /// `n(n-1)/2`.
    pub pairs: u64,
    /// Pairs tied in x.
    pub x_ties: u64,
    /// Pairs tied in y.
    pub y_ties: u64,
    /// Pairs tied in both.
    pub joint_ties: u64,
    /// Discordant pairs.
    pub discordant: u64,
    /// Tie-group sums for the variance: Σt(t-1)(2t+5), Σt(t-1)(t-2), Σt(t-1).
    pub x_groups: TieSums,
    pub y_groups: TieSums,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TieSums {
    pub v: u128,
    pub t2: u128,
    pub t1: u128,
}

impl TieSums {
    fn add_group(&mut self, t: u64) {
        let t = t as u128;
        self.v += t * (t - 1) * (2 * t + 5);
        self.t2 += t * (t - 1) * t.saturating_sub(2);
        self.t1 += t * (t - 1);
    }
}

impl PairCounts {
    /// `C - D`.
    pub fn score(&self) -> i64 {
        self.pairs as i64 - self.x_ties as i64 - self.y_ties as i64 + self.joint_ties as i64
            - 2 * self.discordant as i64
    }

    pub fn concordant(&self) -> u64 {
        (self.score() + self.discordant as i64) as u64
    }

    /// Tie-corrected variance of `C - D`.
    pub fn score_variance(&self) -> f64 {
        let n = self.n as f64;
        let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
        let (x, y) = (&self.x_groups, &self.y_groups);
        let base = (v0 - x.v as f64 - y.v as f64) / 18.0;
        let third = (x.t2 as f64) * (y.t2 as f64) / (9.0 * n * (n - 1.0) * (n - 2.0));
        let pairs = (x.t1 as f64) * (y.t1 as f64) / (2.0 * n * (n - 1.0));
        base + third + pairs
    }
}

fn tie_groups(sorted: &[f64], mut on_group: impl FnMut(u64)) {
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        on_group((j - i) as u64);
        i = j;
    }
}

fn pairs_of(t: u64) -> u64 {
    t * (t - 1) / 2
}

/// Sort `v` ascending, returning the number of strict inversions removed.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
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

/// Concordance and tie counts in O(n log n).
pub fn pair_counts(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();

    let mut c = PairCounts { n: n as u64, pairs: pairs_of(n as u64), ..Default::default() };
    tie_groups(&xs, |t| {
        c.x_ties += pairs_of(t);
        c.x_groups.add_group(t);
    });
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[j] == xs[i] && ys[j] == ys[i] {
            j += 1;
        }
        c.joint_ties += pairs_of((j - i) as u64);
        i = j;
    }
    let mut buf = vec![0.0; n];
    c.discordant = merge_count(&mut ys, &mut buf);
    tie_groups(&ys, |t| {
        c.y_ties += pairs_of(t);
        c.y_groups.add_group(t);
    });
    c
}

/// Kendall tau-b with a two-sided p-value from the tie-corrected normal
/// approximation.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let n = x.len();
    if n < 3 {
        return Ok(CorrelationResult::refused(n, TestStatus::TooFewPoints));
    }
    let constant = |v: &[f64]| v.iter().all(|a| a.partial_cmp(&v[0]) == Some(Ordering::Equal));
    if constant(x) || constant(y) {
        return Ok(CorrelationResult::refused(n, TestStatus::UntestableConstant));
    }
    let c = pair_counts(x, y);
    let score = c.score() as f64;
    let denom = ((c.pairs - c.x_ties) as f64 * (c.pairs - c.y_ties) as f64).sqrt();
    let tau = (score / denom).clamp(-1.0, 1.0);
    let var = c.score_variance();
    let p = if var > 0.0 {
        let z = score / var.sqrt();
        erfc(z.abs() / SQRT_2).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(CorrelationResult { tau_b: Some(tau), p_raw: Some(p), n, status: TestStatus::Ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct classification of every pair.
    fn brute(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
        let (mut s, mut tx, mut ty) = (0i64, 0u64, 0u64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 {
                    tx += 1;
                }
                if dy == 0.0 {
                    ty += 1;
                }
                if dx * dy > 0.0 {
                    s += 1;
                } else if dx * dy < 0.0 {
                    s -= 1;
                }
            }
        }
        (s, tx, ty)
    }

    fn tau(x: &[f64], y: &[f64]) -> f64 {
        kendall_tau_b(x, y).unwrap().tau_b.unwrap()
    }

    #[test]
    fn perfect_orderings() {
        assert_eq!(tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    }

    #[test]
    fn one_tie_in_x() {
        let t = tau(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((t - 2.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn refusals() {
        let r = kendall_tau_b(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.status, TestStatus::UntestableConstant);
        assert!(r.tau_b.is_none() && r.p_raw.is_none());
        let r = kendall_tau_b(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.status, TestStatus::TooFewPoints);
        assert_eq!(kendall_tau_b(&[1.0], &[1.0, 2.0]).unwrap_err(), StatsError::LengthMismatch { x: 1, y: 2 });
        assert_eq!(kendall_tau_b(&[1.0, f64::NAN, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(), StatsError::NonFinite);
    }

    #[test]
    fn no_ties_variance_matches_textbook() {
        // Without ties var(C-D) = n(n-1)(2n+5)/18.
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y = [3.0, 1.0, 4.0, 0.0, 5.0, 9.0, 2.0, 6.0, 8.0, 7.0];
        let c = pair_counts(&x, &y);
        assert_eq!(c.score_variance(), 10.0 * 9.0 * 25.0 / 18.0);
        let (s, _, _) = brute(&x, &y);
        assert_eq!(c.score(), s);
    }

    #[test]
    fn p_values_match_scipy_asymptotic() {
        // scipy.stats.kendalltau(x, y, method="asymptotic")
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y = [0.0, 2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 9.0];
        let r = kendall_tau_b(&x, &y).unwrap();
        assert!((r.tau_b.unwrap() - 0.8222222222222221).abs() < 1e-15);
        assert!((r.p_raw.unwrap() - 0.0009350263526396277).abs() < 1e-12);

        let x = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0, 5.0, 6.0, 7.0, 7.0];
        let y = [2.0, 1.0, 1.0, 3.0, 5.0, 5.0, 4.0, 4.0, 6.0, 6.0, 7.0, 7.0];
        let r = kendall_tau_b(&x, &y).unwrap();
        assert!((r.tau_b.unwrap() - 0.7768860357660614).abs() < 1e-14);
        assert!((r.p_raw.unwrap() - 0.0009283628572188794).abs() < 1e-12);
        let c = pair_counts(&x, &y);
        assert_eq!(c.concordant() - c.discordant, c.score() as u64);
    }

    fn tied_series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..50).prop_flat_map(|n| {
            (
                prop::collection::vec(0i32..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
                prop::collection::vec(0i32..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle((x, y) in tied_series()) {
            let c = pair_counts(&x, &y);
            let (s, tx, ty) = brute(&x, &y);
            prop_assert_eq!(c.score(), s);
            prop_assert_eq!(c.x_ties, tx);
            prop_assert_eq!(c.y_ties, ty);
            let r = kendall_tau_b(&x, &y).unwrap();
            if let Some(t) = r.tau_b {
                let n0 = c.pairs as f64;
                let oracle = s as f64 / ((n0 - tx as f64) * (n0 - ty as f64)).sqrt();
                prop_assert!((t - oracle).abs() <= 1e-12);
            }
        }

        #[test]
        fn antisymmetric((x, y) in tied_series()) {
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            let a = kendall_tau_b(&x, &y).unwrap();
            let b = kendall_tau_b(&x, &neg).unwrap();
            prop_assert_eq!(a.status, b.status);
            if let (Some(ta), Some(tb)) = (a.tau_b, b.tau_b) {
                prop_assert_eq!(ta, -tb);
                prop_assert_eq!(a.p_raw, b.p_raw);
            }
        }

        #[test]
        fn monotone_transform_invariant((x, y) in tied_series()) {
            let fx: Vec<f64> = x.iter().map(|v| v * v * v + 3.0 * v - 7.0).collect();
            let a = kendall_tau_b(&x, &y).unwrap();
            let b = kendall_tau_b(&fx, &y).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
