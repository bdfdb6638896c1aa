use super::{check_finite, StatsError, TestStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d_stat: Option<f64>,
    pub p_raw: Option<f64>,
    pub n_high: usize,
    pub n_rest: usize,
    pub status: TestStatus,
}

impl KsResult {
    /// Result for a partition with an empty side.
    pub fn too_few(n_high: usize, n_rest: usize) -> Self {
        Self { d_stat: None, p_raw: None, n_high, n_rest, status: TestStatus::TooFewPoints }
    }
}

/// Asymptotic Kolmogorov tail probability for statistic `d` with
/// effective sample size `ne`, using the `sqrt(ne) + 0.12 + 0.11/sqrt(ne)`
/// small-sample correction.
pub fn kolmogorov_pvalue(d: f64, ne: f64) -> f64 {
    let en = ne.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (a2 * kf * kf).exp();
        sum += sign * term;
        if term < 1e-12 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    // The series only fails to converge as lambda -> 0, where p -> 1.
    1.0
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] == v {
            i += 1;
        }
        while j < nb && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    Ok(KsResult {
        d_stat: Some(d),
        p_raw: Some(kolmogorov_pvalue(d, ne)),
        n_high: na,
        n_rest: nb,
        status: TestStatus::Ok,
    })
}
