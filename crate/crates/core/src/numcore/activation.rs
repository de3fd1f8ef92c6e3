use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Numerically safe softmax (shifts by the maximum before exponentiating).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("softmax input must be finite".into()));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// Logistic function, evaluated on the branch whose exponent is non-positive
/// so large magnitudes saturate instead of overflowing.
/// Largest `f64` below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside (0, 1): where the exact value
/// rounds to an endpoint the nearest interior float is returned instead.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    };
    y.clamp(f64::from_bits(1), BELOW_ONE)
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), [0.5, 0.5]);
        for c in [-700.0, -3.5, 0.0, 12.0, 800.0] {
            for p in softmax(&[c, c, c]).unwrap() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let p = softmax(&[core::f64::consts::LN_2, 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[]), Err(Error::Empty("softmax")));
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-12);
        assert!((sigmoid(libm::log(3.0)) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) > 0.0 && sigmoid(800.0) < 1.0);
        assert!(sigmoid(f64::NEG_INFINITY) > 0.0 && sigmoid(f64::INFINITY) < 1.0);
        assert_eq!(sigmoid(37.0), 1.0 - f64::EPSILON / 2.0);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.4, 0.4]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            x in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let q = softmax(&shifted).unwrap();
            prop_assert_eq!(argmax(&p), argmax(&q));
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn sigmoid_is_symmetric_and_monotone(x in -60.0f64..60.0, dx in 1e-6f64..5.0) {
            prop_assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
            prop_assert!(sigmoid(x + dx) >= sigmoid(x));
        }
    }
}
