//! Scalar numerics shared by the rest of the crate.

use core::f64::consts::{PI, SQRT_2};

/// `ln(sqrt(2 pi))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Log-sum-exp with max shift. Empty input or all `-inf` gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut s = 0.0;
    for &v in values {
        s += libm::exp(v - m);
    }
    m + libm::log(s)
}

/// Normalizes `logits` in place into log-probabilities.
pub fn log_normalize(logits: &mut [f64]) {
    let z = log_sum_exp(logits);
    for v in logits.iter_mut() {
        *v -= z;
    }
}

/// Softmax of `logits` into `out` (same length).
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = libm::exp(l - m);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

pub fn gaussian_log_pdf(x: f64, mean: f64, stddev: f64) -> f64 {
    let z = (x - mean) / stddev;
    -0.5 * z * z - libm::log(stddev) - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal upper tail `1 - cdf(z)`, accurate for large `z`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Mass of `N(0,1)` on `[a, b]`, computed on whichever tail avoids cancellation.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let m = if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    };
    m.clamp(0.0, 1.0)
}

/// Mass of `N(mean, stddev^2)` on `[a, b]`; infinite endpoints allowed.
pub fn gaussian_mass(mean: f64, stddev: f64, a: f64, b: f64) -> f64 {
    std_normal_mass((a - mean) / stddev, (b - mean) / stddev)
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub(crate) const TWO_PI: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    // Independent erf via the Maclaurin series, fine for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        sum * 2.0 / PI.sqrt()
    }

    #[test]
    fn cdf_matches_series() {
        for i in -30..=30 {
            let z = i as f64 * 0.1;
            let want = 0.5 * (1.0 + erf_series(z / SQRT_2));
            assert!((normal_cdf(z) - want).abs() < 1e-14, "z={z}");
        }
    }

    #[test]
    fn far_tail_mass_is_positive() {
        let m = std_normal_mass(8.0, 9.0);
        // Mills-ratio approximation of the tail at 8.
        let approx = libm::exp(-32.0) / (8.0 * (2.0 * PI).sqrt()) * (1.0 - 1.0 / 64.0);
        assert!(m > 0.0 && (m / approx - 1.0).abs() < 0.01);
        assert_eq!(std_normal_mass(1.0, 1.0), 0.0);
        assert_eq!(gaussian_mass(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn lse_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[2.5]), 2.5);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - 1000.0 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_integrates_to_mass() {
        // Midpoint rule on [-1, 2] for N(0.3, 0.7).
        let n = 20000;
        let h = 3.0 / n as f64;
        let s: f64 = (0..n).map(|i| gaussian_log_pdf(-1.0 + (i as f64 + 0.5) * h, 0.3, 0.7).exp() * h).sum();
        assert!((s - gaussian_mass(0.3, 0.7, -1.0, 2.0)).abs() < 1e-8);
    }
}
