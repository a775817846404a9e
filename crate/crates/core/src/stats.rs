//! Ensemble summaries.

use alloc::vec::Vec;

/// Sample mean and standard error of the mean. Non-finite values are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se<I: IntoIterator<Item = f64>>(xs: I) -> MeanSe {
    // Welford
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for x in xs {
        if !x.is_finite() {
            continue;
        }
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    let se = if n > 1 { libm::sqrt(m2 / (n - 1) as f64 / n as f64) } else { 0.0 };
    MeanSe { mean: if n == 0 { f64::NAN } else { mean }, se, n }
}

/// Linear-interpolated quantile of the finite values; NaN if there are none.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    quantile_in_place(&mut v, q)
}

pub fn quantile_in_place(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let w = pos - lo as f64;
    if w == 0.0 {
        v[lo]
    } else {
        v[lo] + w * (v[hi] - v[lo])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn fraction<I: IntoIterator<Item = bool>>(xs: I) -> f64 {
    let (mut n, mut k) = (0usize, 0usize);
    for x in xs {
        n += 1;
        k += x as usize;
    }
    if n == 0 {
        f64::NAN
    } else {
        k as f64 / n as f64
    }
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    libm::sqrt(xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let m = mean_se([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - libm::sqrt(5.0 / 3.0 / 4.0)).abs() < 1e-15);
        assert_eq!(mean_se([1.0, f64::NAN]).n, 1);
    }

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!(median(&[]).is_nan());
        assert_eq!(rms(&[3.0, 4.0]), libm::sqrt(12.5));
    }
}
