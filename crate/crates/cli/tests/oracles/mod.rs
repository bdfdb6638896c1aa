//! Slow, obviously-correct reference implementations.

/// tau-b by classifying every pair; `None` when either variable is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let n0 = (n * n.saturating_sub(1) / 2) as i64;
    let den = ((n0 - tx) as f64 * (n0 - ty) as f64).sqrt();
    (den > 0.0).then(|| (c - d) as f64 / den)
}

/// Largest ECDF gap, evaluated at every pooled value.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], v: f64| s.iter().filter(|&&x| x <= v).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&v| (ecdf(a, v) - ecdf(b, v)).abs()).fold(0.0, f64::max)
}

/// Benjamini-Yekutieli step-up, written from its definition.
pub fn by_step_up(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut c = 0.0;
    for k in 1..=m {
        c += 1.0 / k as f64;
    }
    let scale = m as f64 * c;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut out = vec![0.0; m];
    let mut prev = f64::INFINITY;
    let mut k = m;
    while k >= 1 {
        let i = idx[k - 1];
        let q = (p[i] * scale / k as f64).min(prev);
        prev = q;
        out[i] = q.min(1.0);
        k -= 1;
    }
    out
}

/// Pearson statistic of a histogram against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}
