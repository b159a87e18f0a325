//! Cross-entropy losses: reduction to the plain loss, sign, a hand-evaluated
//! case and the analytic gradient against central differences.

use proptest::prelude::*;
use wpal::train::{bce_on_tape, cross_entropy, weighted_cross_entropy, weighted_cross_entropy_grad, LossKind, WeightVector};
use wpal::{Tape, Tensor};

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|l| {
        (
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }), l),
            prop::collection::vec(0.01f64..0.99, l),
            prop::collection::vec(0.02f64..0.98, l),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn balanced_weights_reduce_to_plain((truth, pred, _) in case()) {
        let w = WeightVector::balanced(truth.len());
        let a = weighted_cross_entropy(&truth, &pred, &w).unwrap();
        let b = cross_entropy(&truth, &pred).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn losses_are_non_negative((truth, pred, w) in case()) {
        prop_assert!(cross_entropy(&truth, &pred).unwrap() >= 0.0);
        prop_assert!(weighted_cross_entropy(&truth, &pred, &WeightVector(w)).unwrap() >= 0.0);
    }

    #[test]
    fn gradient_matches_central_difference((truth, pred, w) in case()) {
        let w = WeightVector(w);
        let g = weighted_cross_entropy_grad(&truth, &pred, &w).unwrap();
        let h = 1e-6;
        for i in 0..pred.len() {
            let mut up = pred.clone();
            let mut down = pred.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (weighted_cross_entropy(&truth, &up, &w).unwrap()
                - weighted_cross_entropy(&truth, &down, &w).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }

    /// The taped loss equals the direct evaluation and back-propagates the
    /// same gradient.
    #[test]
    fn taped_loss_agrees((truth, pred, w) in case()) {
        let w = WeightVector(w);
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(pred.clone()));
        let l = bce_on_tape(&mut tape, p, &truth, LossKind::Weighted, &w).unwrap();
        tape.backward(l).unwrap();
        let direct = weighted_cross_entropy(&truth, &pred, &w).unwrap();
        prop_assert!((tape.value(l).item() - direct).abs() <= 1e-12 * direct.max(1.0));
        let g = tape.take_grad(p).unwrap();
        let expected = weighted_cross_entropy_grad(&truth, &pred, &w).unwrap();
        for (a, b) in g.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn hand_evaluated_rare_positive() {
    // One positive attribute with proportion 0.1 predicted at 0.5:
    // −ln(0.5)/(2·0.1) = 5·ln 2.
    let l = weighted_cross_entropy(&[1.0], &[0.5], &WeightVector(vec![0.1])).unwrap();
    assert!((l - std::f64::consts::LN_2 / 0.2).abs() < 1e-9);
}

#[test]
fn length_mismatch_rejected() {
    assert!(cross_entropy(&[1.0, 0.0], &[0.5]).is_err());
    assert!(weighted_cross_entropy(&[1.0], &[0.5], &WeightVector(vec![0.1, 0.2])).is_err());
}
