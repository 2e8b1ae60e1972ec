//! Scalar LLR arithmetic shared by the density-evolution grid and the
//! finite-length decoder.

/// Above this magnitude the check-node rule is evaluated in log form.
const LOG_FORM_THRESHOLD: f64 = 15.0;

/// The check-node product rule `2·atanh(tanh(a/2)·tanh(b/2))`.
///
/// Small arguments use the tanh form directly. When both inputs are large the
/// tanh product rounds to 1, so the equivalent
/// `min(|a|,|b|) + ln(1+e^{-(|a|+|b|)}) − ln(1+e^{-||a|−|b||})` form is used.
/// The result magnitude never exceeds `min(|a|, |b|)`, and its sign is the
/// product of the input signs.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let (ma, mb) = (a.abs(), b.abs());
    let min = ma.min(mb);
    let mag = if min > LOG_FORM_THRESHOLD {
        let gap = (-(ma - mb).abs()).exp().ln_1p() - (-(ma + mb)).exp().ln_1p();
        min - gap
    } else {
        let t = (0.5 * ma).tanh() * (0.5 * mb).tanh();
        2.0 * t.atanh()
    };
    let mag = mag.clamp(0.0, min);
    if (a < 0.0) != (b < 0.0) {
        -mag
    } else {
        mag
    }
}

/// Min-sum approximation of [`boxplus`].
#[inline]
pub fn min_sum(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) != (b < 0.0) {
        -m
    } else {
        m
    }
}

/// Folds [`boxplus`] over a sequence. Returns `None` for an empty input.
pub fn boxplus_all(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    values.into_iter().reduce(boxplus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(a: f64, b: f64) -> f64 {
        2.0 * ((0.5 * a).tanh() * (0.5 * b).tanh()).atanh()
    }

    #[test]
    fn matches_tanh_form_in_its_accurate_range() {
        for &(a, b) in &[(1.0, 2.0), (-3.0, 0.5), (7.0, -7.0), (0.1, 12.0), (14.0, 14.0)] {
            let got = boxplus(a, b);
            let want = reference(a, b);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn worked_example() {
        // 2·atanh(tanh(1)·tanh(-1.5)) = -1.69345...
        let v = boxplus(2.0, -3.0);
        assert!((v + 1.693_453_66).abs() < 1e-8, "{v}");
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        assert!((boxplus(50.0, 50.0) - (50.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((boxplus(3.0, 1e6) - 3.0).abs() < 1e-12);
        assert_eq!(boxplus(-40.0, 1e300), -40.0);
        assert!(boxplus(200.0, 300.0).is_finite());
    }

    #[test]
    fn zero_annihilates() {
        assert_eq!(boxplus(0.0, 17.0), 0.0);
        assert_eq!(boxplus(-5.0, 0.0).abs(), 0.0);
    }

    #[test]
    fn fold() {
        assert_eq!(boxplus_all([]), None);
        assert_eq!(boxplus_all([4.0]), Some(4.0));
        let v = boxplus_all([4.0, -2.0, 9.0]).unwrap();
        assert!(v < 0.0 && v.abs() < 2.0);
    }
}
