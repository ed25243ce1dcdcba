//! Scalar loss terms and their derivatives.

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Scale for over-estimates (late predictions) in the health-score loss.
pub const HS_LATE: f64 = 10.0;
/// Scale for under-estimates (early predictions).
pub const HS_EARLY: f64 = 13.0;

/// Cross-entropy `-Σ q_ν ln p_ν` against a one-hot target.
pub fn loss_ce(probs: &[f64], q: &[f64]) -> f64 {
    probs
        .iter()
        .zip(q)
        .filter(|(_, &qv)| qv != 0.0)
        .map(|(&p, &qv)| -qv * p.max(PROB_FLOOR).ln())
        .sum()
}

/// Cross-entropy for a class index.
pub fn loss_ce_label(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

pub fn loss_hs(pred: f64, truth: f64) -> f64 {
    if pred >= truth {
        ((pred - truth) / HS_LATE).exp_m1()
    } else {
        ((truth - pred) / HS_EARLY).exp_m1()
    }
}

/// `d loss_hs / d pred`; the right derivative is used at `pred == truth`.
pub fn loss_hs_grad(pred: f64, truth: f64) -> f64 {
    if pred >= truth {
        ((pred - truth) / HS_LATE).exp() / HS_LATE
    } else {
        -((truth - pred) / HS_EARLY).exp() / HS_EARLY
    }
}

/// Dead-band penalty on the backward difference `cur - prev`:
/// `max(0, |cur - prev - zeta| - a)`.
pub fn loss_mono(cur: f64, prev: f64, zeta: f64, a: f64) -> f64 {
    ((cur - prev - zeta).abs() - a).max(0.0)
}

/// `d loss_mono / d cur`; `d / d prev` is its negative. Zero inside the band.
pub fn loss_mono_grad(cur: f64, prev: f64, zeta: f64, a: f64) -> f64 {
    let e = cur - prev - zeta;
    if e.abs() > a {
        e.signum()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ce_examples() {
        assert_eq!(loss_ce(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((loss_ce(&[0.5, 0.5], &[1.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((loss_ce(&[0.9, 0.1], &[0.0, 1.0]) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((loss_ce(&[1.0, 0.0], &[0.0, 1.0]) - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn hs_examples() {
        assert_eq!(loss_hs(50.0, 50.0), 0.0);
        let e1 = std::f64::consts::E - 1.0;
        assert!((loss_hs(60.0, 50.0) - e1).abs() < 1e-12);
        assert!((loss_hs(37.0, 50.0) - e1).abs() < 1e-12);
        assert!((loss_hs(63.0, 50.0) - 2.6692966676192444).abs() < 1e-12);
    }

    #[test]
    fn mono_examples() {
        assert_eq!(loss_mono(4.0, 5.0, -1.0, 0.9), 0.0);
        assert_eq!(loss_mono(5.0, 5.0, -1.0, 0.5), 0.5);
        assert_eq!(loss_mono(3.6, 5.0, -1.0, 0.5), 0.0);
        assert_eq!(loss_mono_grad(5.0, 5.0, -1.0, 0.5), 1.0);
        assert_eq!(loss_mono_grad(2.0, 5.0, -1.0, 0.5), -1.0);
    }

    proptest! {
        #[test]
        fn hs_is_asymmetric_and_monotone(y in 0.0f64..400.0, c in 1e-3f64..150.0, d in 1e-3f64..10.0) {
            prop_assert!(loss_hs(y + c, y) > loss_hs(y - c, y));
            prop_assert!(loss_hs(y + c + d, y) > loss_hs(y + c, y));
            prop_assert!(loss_hs(y - c - d, y) > loss_hs(y - c, y));
        }

        #[test]
        fn hs_grad_matches_difference(p in -100.0f64..400.0, y in 0.0f64..300.0) {
            prop_assume!((p - y).abs() > 1e-3);
            let h = 1e-6;
            let fd = (loss_hs(p + h, y) - loss_hs(p - h, y)) / (2.0 * h);
            let g = loss_hs_grad(p, y);
            prop_assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3));
        }

        #[test]
        fn mono_zero_inside_band(prev in -50.0f64..50.0, off in -0.89f64..0.89) {
            prop_assert_eq!(loss_mono(prev - 1.0 + off, prev, -1.0, 0.9), 0.0);
        }
    }
}
