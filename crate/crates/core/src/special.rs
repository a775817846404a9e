//! Gaussian helpers on top of `libm`.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn norm_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Two-sided p-value of a standard normal statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    libm::erfc(z.abs() * FRAC_1_SQRT_2).min(1.0)
}

/// `E_x[1/R_t]` for a three-dimensional Bessel process started at `x`.
pub fn bes3_inverse_mean(x: f64, t: f64) -> f64 {
    (2.0 * norm_cdf(x / libm::sqrt(t)) - 1.0) / x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-14);
        assert!((bes3_inverse_mean(1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
    }
}
