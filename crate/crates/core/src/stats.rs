//! Normal-distribution helpers shared by confidence intervals and
//! significance stars.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Inverse standard-normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Standard-normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Two-sided p-value for a z statistic.
pub fn p_value_two_sided(z: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z.abs()))
}

/// Significance stars at the 10/5/1% levels from normal quantiles.
pub fn stars(z: f64) -> &'static str {
    let z = z.abs();
    if z > normal_quantile(0.995) {
        "***"
    } else if z > normal_quantile(0.975) {
        "**"
    } else if z > normal_quantile(0.95) {
        "*"
    } else {
        ""
    }
}
