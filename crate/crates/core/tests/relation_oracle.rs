//! Bin-attribute relationship statistics against a two-pass recomputation.

use proptest::prelude::*;
use wpal::localization::{estimate_relationship, relationship_strength, ScoreMatrix};

const ROWS: usize = 50;
const BINS: usize = 200;

/// Scores in `[0.01, 5)` and labels with at least one sample of each class.
fn problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.01f64..5.0, ROWS * BINS),
        prop::collection::vec(prop::bool::ANY, ROWS),
    )
        .prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s, l.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
        })
}

/// First pass counts each class, second pass sums each bin per class.
fn brute_force(scores: &[f64], labels: &[f64], bin: usize) -> (f64, f64) {
    let positives = labels.iter().filter(|&&l| l == 1.0).count() as f64;
    let negatives = labels.len() as f64 - positives;
    let (mut p, mut n) = (0.0, 0.0);
    for (i, &l) in labels.iter().enumerate() {
        let s = scores[i * BINS + bin];
        if l == 1.0 {
            p += s;
        } else {
            n += s;
        }
    }
    (p / positives, n / negatives)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matches_two_pass_oracle((scores, labels) in problem()) {
        let m = ScoreMatrix::new(ROWS, BINS, scores.clone()).unwrap();
        let st = estimate_relationship(&m, &labels).unwrap();
        for k in 0..BINS {
            let (pave, nave) = brute_force(&scores, &labels, k);
            prop_assert_eq!(st.pave[k], pave);
            prop_assert_eq!(st.nave[k], nave);
            prop_assert_eq!(st.rs[k], relationship_strength(pave, nave));
            prop_assert_eq!(st.rs[k], pave / nave);
        }
    }

    /// Swapping the classes swaps the averages exactly; RS becomes its
    /// reciprocal up to the rounding of one division.
    #[test]
    fn label_swap_inverts_strength((scores, labels) in problem()) {
        let m = ScoreMatrix::new(ROWS, BINS, scores).unwrap();
        let a = estimate_relationship(&m, &labels).unwrap();
        let swapped: Vec<f64> = labels.iter().map(|l| 1.0 - l).collect();
        let b = estimate_relationship(&m, &swapped).unwrap();
        prop_assert_eq!(&a.pave, &b.nave);
        prop_assert_eq!(&a.nave, &b.pave);
        for (x, y) in a.rs.iter().zip(&b.rs) {
            prop_assert!((x * y - 1.0).abs() <= 4.0 * f64::EPSILON, "{x} * {y} != 1");
        }
    }
}

#[test]
fn single_class_labels_rejected() {
    let m = ScoreMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
    assert!(estimate_relationship(&m, &[1.0, 1.0]).is_err());
    assert!(estimate_relationship(&m, &[1.0, 0.5]).is_err());
}
