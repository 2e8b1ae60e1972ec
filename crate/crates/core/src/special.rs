//! Gaussian tail functions.

use std::f64::consts::SQRT_2;

/// Upper tail of the standard normal distribution, `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(a < Z ≤ b)` for a standard normal `Z`, evaluated in whichever tail keeps
/// relative precision.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = if a >= 0.0 {
        q_function(a) - q_function(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - q_function(b)
    };
    m.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(q_function(0.0), 0.5);
        // Reference values from a 50-digit evaluation of erfc.
        let cases = [
            (1.0, 0.158_655_253_931_457_05),
            (3.0, 1.349_898_031_630_094_5e-3),
            (6.0, 9.865_876_450_376_981e-10),
            (10.0, 7.619_853_024_160_526e-24),
            (20.0, 2.753_624_118_606_233_7e-89),
            (37.0, 5.725_571_222_524_577e-300),
        ];
        for (x, want) in cases {
            let got = q_function(x);
            assert!(((got - want) / want).abs() < 1e-12, "Q({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn interval_tails() {
        let total = normal_interval(f64::NEG_INFINITY, f64::INFINITY);
        assert!((total - 1.0).abs() < 1e-15);
        let far = normal_interval(-12.0, -11.0);
        let want = normal_cdf(-11.0) - normal_cdf(-12.0);
        assert!(((far - want) / want).abs() < 1e-12);
        assert!(far > 0.0);
        assert_eq!(normal_interval(1.0, 0.5), 0.0);
    }
}
