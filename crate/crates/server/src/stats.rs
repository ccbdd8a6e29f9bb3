//! Exact binomial test against a fair coin.

/// Two-sided exact binomial p-value for `k` successes in `n` trials under
/// p = 0.5: twice the smaller tail, capped at 1.
pub fn binomial_two_sided(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let k = k.min(n);
    // symmetric under p = 1/2, so the smaller tail is a lower tail
    (2.0 * binomial_cdf(k.min(n - k), n)).min(1.0)
}

/// P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
fn binomial_cdf(k: u64, n: u64) -> f64 {
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0f64;
    let mut total = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        total += (ln_choose + ln_half_n).exp();
    }
    total.min(1.0)
}
