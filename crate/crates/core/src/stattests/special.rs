//! Reference distributions used by the battery.

use statrs::function::gamma;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Upper regularized incomplete gamma function `Q(a, x)`, with `Q(a, x) = 1`
/// for `x <= 0`.
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma::checked_gamma_ur(a, x).unwrap_or(f64::NAN)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        for (x, e) in [
            (0.1, 0.8875370839817152),
            (0.5, 0.4795001221869535),
            (1.0, 0.15729920705028513),
            (2.0, 0.004677734981047265),
            (3.0, 2.2090496998585438e-05),
            (5.0, 1.5374597944280351e-12),
            (8.0, 1.1224297172982928e-29),
            (12.0, 1.3562611692059042e-64),
            (20.0, 5.3958656116079005e-176),
        ] {
            let rel = (erfc(x) / e - 1.0).abs();
            assert!(rel < 1e-10, "erfc({x}) rel err {rel:e}");
        }
        assert!((igamc(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-14);
        // Q(1/2, x) = erfc(sqrt(x))
        for x in [0.01, 0.3, 2.0, 9.0, 40.0] {
            let rel = (igamc(0.5, x) - erfc(x.sqrt())).abs() / erfc(x.sqrt());
            assert!(rel < 1e-10, "x={x} rel={rel}");
        }
        // Q(k, x) = exp(-x) sum_{i<k} x^i / i!
        for (k, x) in [(3u32, 2.5), (8, 11.0), (20, 7.0)] {
            let mut term = 1.0;
            let mut sum = 1.0;
            for i in 1..k {
                term *= x / i as f64;
                sum += term;
            }
            let expect = (-x).exp() * sum;
            assert!(((igamc(k as f64, x) - expect) / expect).abs() < 1e-10);
        }
        assert_eq!(igamc(4.5, 0.0), 1.0);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }
}
