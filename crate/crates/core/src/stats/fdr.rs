use super::StatsError;

/// Adjusted p-values, index-aligned with the raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedPValues {
    pub p_adj: Vec<f64>,
}

/// `c(m) = Σ_{k=1..m} 1/k`.
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|k| 1.0 / k as f64).sum()
}

/// Benjamini-Yekutieli step-up adjustment, valid under arbitrary
/// dependence between tests.
pub fn by_adjust(p: &[f64]) -> Result<AdjustedPValues, StatsError> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::InvalidPValue(bad));
    }
    let m = p.len();
    let scale = m as f64 * harmonic(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut p_adj = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let rank = (pos + 1) as f64;
        running = running.min(p[i] * scale / rank);
        p_adj[i] = running;
    }
    Ok(AdjustedPValues { p_adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_values() {
        let a = by_adjust(&[0.04, 0.01, 0.03]).unwrap().p_adj;
        // c(3) = 11/6, so m·c = 5.5.
        let expected = [0.04 * 5.5 / 3.0, 0.01 * 5.5, 0.04 * 5.5 / 3.0];
        for (x, e) in a.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15, "{a:?}");
        }
        assert!((a[0] - 0.073_333_333_333_333_33).abs() < 1e-15);
        assert!((a[1] - 0.055).abs() < 1e-15);
    }

    #[test]
    fn caps_and_identity() {
        assert_eq!(by_adjust(&[1.0, 1.0]).unwrap().p_adj, [1.0, 1.0]);
        assert_eq!(by_adjust(&[0.05]).unwrap().p_adj, [0.05]);
        assert!(by_adjust(&[]).unwrap().p_adj.is_empty());
        assert_eq!(by_adjust(&[1.5]).unwrap_err(), StatsError::InvalidPValue(1.5));
    }

    proptest! {
        #[test]
        fn monotone_dominating_capped(p in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let a = by_adjust(&p).unwrap().p_adj;
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&x, &y| p[x].total_cmp(&p[y]));
            for w in idx.windows(2) {
                prop_assert!(a[w[0]] <= a[w[1]]);
            }
            for (raw, adj) in p.iter().zip(&a) {
                prop_assert!(adj >= raw && *adj <= 1.0);
            }
        }
    }
}
