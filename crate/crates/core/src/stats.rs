//! One-sample Kolmogorov–Smirnov test against the unit exponential.

/// `sup_x |F_n(x) − (1 − e^{−x})|`.
pub fn ks_statistic_exp1(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let cdf = -(-x.max(0.0)).exp_m1();
        let above = (i + 1) as f64 / n - cdf;
        let below = cdf - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// True when the sample is not rejected as Exp(1) at level `alpha`.
pub fn ks_exp1_passes(sample: &[f64], alpha: f64) -> bool {
    !sample.is_empty() && ks_pvalue(ks_statistic_exp1(sample), sample.len()) >= alpha
}
