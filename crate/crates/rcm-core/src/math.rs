//! Scalar math routed through `libm`.
//!
//! Call sites use these instead of the std float methods so that std and
//! no_std builds of this crate produce bitwise-identical numbers.

pub use libm::{atan2, cbrt, ceil, cos, erf, exp, expm1, fabs, floor, hypot, log, log1p, log2, pow, round, sin, sqrt};

/// x^n by binary exponentiation. Exact for n = 0, 1 and |x| a power of two.
pub fn powi(x: f64, n: i32) -> f64 {
    let m = n as i64;
    if m < 0 {
        return 1.0 / powi_u(x, (-m) as u64);
    }
    powi_u(x, m as u64)
}

fn powi_u(x: f64, mut e: u64) -> f64 {
    let mut acc = 1.0;
    let mut base = x;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// x^{−s} with 2s a small nonnegative integer: cheap and exact-path for the
/// half-integer exponents this crate actually uses.
pub fn inv_pow_half(x: f64, s: f64) -> f64 {
    let n2 = 2.0 * s;
    let n = round(n2);
    if (n - n2).abs() > 1e-9 || !(0.0..=127.0).contains(&n) {
        return pow(x, -s);
    }
    let n = n as i32;
    let mut v = powi(x, n >> 1);
    if n & 1 == 1 {
        v *= sqrt(x);
    }
    1.0 / v
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / core::f64::consts::SQRT_2))
}

/// Inverse standard normal CDF on (0, 1).
///
/// Acklam's rational approximation polished with one Halley step through
/// `erf`; absolute error is below 1e-14 away from the extreme tails.
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        // 1 − p is exact for p ≥ 0.5 (Sterbenz), so no log1p gymnastics.
        let q = sqrt(-2.0 * log(1.0 - p));
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };

    // Halley refinement: e'(x) = φ(x), e''(x) = −x φ(x).
    let e = norm_cdf(x) - p;
    let u = e * sqrt(2.0 * core::f64::consts::PI) * exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powi_matches_std() {
        for n in -6..=12 {
            let v = powi(1.7, n);
            let want = 1.7f64.powi(n);
            assert!((v - want).abs() <= 1e-15 * want.abs(), "n={n}: {v} vs {want}");
        }
        assert_eq!(powi(2.0, 10), 1024.0);
        assert_eq!(powi(3.0, 0), 1.0);
    }

    #[test]
    fn inv_norm_cdf_known_quantiles() {
        // Reference values from the standard normal table (15 digits).
        assert!((inv_norm_cdf(0.5) - 0.0).abs() < 1e-15);
        assert!((inv_norm_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((inv_norm_cdf(0.025) + 1.959963984540054).abs() < 1e-12);
        assert!((inv_norm_cdf(0.841344746068543) - 1.0).abs() < 1e-12);
        assert!((inv_norm_cdf(0.999) - 3.090232306167813).abs() < 1e-11);
    }

    #[test]
    fn inv_norm_cdf_roundtrip() {
        let mut p = 1e-10;
        while p < 1.0 - 1e-10 {
            let x = inv_norm_cdf(p);
            let back = norm_cdf(x);
            assert!(
                (back - p).abs() <= 1e-13 + 1e-10 * p,
                "p={p}: roundtrip {back}"
            );
            p += 0.0173;
        }
    }
}
