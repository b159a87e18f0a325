//! Label-based mean accuracy and example-based multi-label criteria.

use std::fmt::Write as _;

use crate::error::{Result, WpalError};

/// Probabilities strictly above this count as positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn binarize(scores: &[f64]) -> Vec<bool> {
    scores.iter().map(|&s| s > DECISION_THRESHOLD).collect()
}

pub fn binarize_rows(rows: &[Vec<f64>]) -> Vec<Vec<bool>> {
    rows.iter().map(|r| binarize(r)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    /// TP/P, or `None` without ground-truth positives.
    pub fn recall(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    pub fn specificity(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.tn as f64 / self.negatives() as f64)
    }
}

fn check_shapes(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(WpalError::ShapeMismatch {
            op: "metrics",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    let l = truth.first().map_or(0, |r| r.len());
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != l || t.len() != l {
            return Err(WpalError::ShapeMismatch {
                op: "metrics",
                left: vec![pred.len(), p.len()],
                right: vec![truth.len(), t.len()],
            });
        }
    }
    Ok(l)
}

/// Per-attribute confusion counts over an `N×L` matrix pair.
pub fn confusion(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<Vec<Confusion>> {
    let l = check_shapes(pred, truth)?;
    let mut out = vec![Confusion::default(); l];
    for (p, t) in pred.iter().zip(truth) {
        for (c, (&pv, &tv)) in out.iter_mut().zip(p.iter().zip(t)) {
            match (pv, tv) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(out)
}

fn ma_from_counts(counts: &[Confusion]) -> Result<f64> {
    if counts.is_empty() {
        return Err(WpalError::InvalidInput("mean accuracy needs at least one attribute".into()));
    }
    let mut total = 0.0;
    for (i, c) in counts.iter().enumerate() {
        let (Some(r), Some(s)) = (c.recall(), c.specificity()) else {
            return Err(WpalError::InvalidInput(format!(
                "attribute {i} has {} positives and {} negatives; both must be non-zero",
                c.positives(),
                c.negatives()
            )));
        };
        total += r + s;
    }
    Ok(total / (2.0 * counts.len() as f64))
}

/// `mA = 1/(2L) · Σ_i (TP_i/P_i + TN_i/N_i)`.
pub fn mean_accuracy(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    ma_from_counts(&confusion(pred, truth)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleBased {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Sample-averaged set overlap between predicted and true positive labels.
///
/// Empty predicted set: precision term 0. Empty true set: recall term 0.
/// Both empty: accuracy term 1.
pub fn example_based(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<ExampleBased> {
    check_shapes(pred, truth)?;
    if pred.is_empty() {
        return Err(WpalError::InvalidInput("example-based metrics need at least one sample".into()));
    }
    let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let inter = p.iter().zip(t).filter(|(&a, &b)| a && b).count() as f64;
        let union = p.iter().zip(t).filter(|(&a, &b)| a || b).count() as f64;
        let np = p.iter().filter(|&&a| a).count() as f64;
        let nt = t.iter().filter(|&&b| b).count() as f64;
        acc += if union > 0.0 { inter / union } else { 1.0 };
        prec += if np > 0.0 { inter / np } else { 0.0 };
        rec += if nt > 0.0 { inter / nt } else { 0.0 };
    }
    let n = pred.len() as f64;
    let (accuracy, precision, recall) = (acc / n, prec / n, rec / n);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ExampleBased {
        accuracy,
        precision,
        recall,
        f1,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub per_attribute: Vec<Confusion>,
    pub example: ExampleBased,
}

impl EvalReport {
    pub fn compute(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<Self> {
        let per_attribute = confusion(pred, truth)?;
        Ok(EvalReport {
            mean_accuracy: ma_from_counts(&per_attribute)?,
            per_attribute,
            example: example_based(pred, truth)?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mA = {}", self.mean_accuracy).unwrap();
        writeln!(s, "Acc_exam = {}", self.example.accuracy).unwrap();
        writeln!(s, "Prec_exam = {}", self.example.precision).unwrap();
        writeln!(s, "Rec_exam = {}", self.example.recall).unwrap();
        writeln!(s, "F1 = {}", self.example.f1).unwrap();
        s
    }

    pub fn per_attribute_csv(&self, names: &[String]) -> String {
        let mut s = String::from("attribute,name,TP,TN,FP,FN,recall,specificity\n");
        for (i, c) in self.per_attribute.iter().enumerate() {
            let name = names.get(i).map_or("", String::as_str);
            let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
            writeln!(
                s,
                "{i},{name},{},{},{},{},{},{}",
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                fmt(c.recall()),
                fmt(c.specificity())
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[u8]) -> Vec<Vec<bool>> {
        v.iter().map(|&b| vec![b == 1]).collect()
    }

    #[test]
    fn ma_hand_case() {
        let truth = col(&[1, 1, 0, 0]);
        let pred = col(&[1, 0, 0, 0]);
        assert_eq!(mean_accuracy(&pred, &truth).unwrap(), 0.75);
    }

    #[test]
    fn ma_extremes() {
        let truth = vec![vec![true, false], vec![false, true], vec![true, true], vec![false, false]];
        assert_eq!(mean_accuracy(&truth, &truth).unwrap(), 1.0);
        let comp: Vec<Vec<bool>> = truth.iter().map(|r| r.iter().map(|b| !b).collect()).collect();
        assert_eq!(mean_accuracy(&comp, &truth).unwrap(), 0.0);
    }

    #[test]
    fn ma_rejects_single_class_attribute() {
        let truth = vec![vec![true, true], vec![true, false]];
        match mean_accuracy(&truth, &truth) {
            Err(WpalError::InvalidInput(m)) => assert!(m.contains("attribute 0")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn example_based_set_arithmetic() {
        // Y = {1,2}, f(x) = {2,3} over attributes 0..4
        let truth = vec![vec![false, true, true, false]];
        let pred = vec![vec![false, false, true, true]];
        let e = example_based(&pred, &truth).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.precision, 0.5);
        assert_eq!(e.recall, 0.5);
        assert_eq!(e.f1, 0.5);
    }

    #[test]
    fn example_based_degenerate_conventions() {
        let truth = vec![vec![true, false], vec![false, true]];
        let pred = vec![vec![false, false], vec![false, false]];
        let e = example_based(&pred, &truth).unwrap();
        assert_eq!((e.recall, e.precision, e.f1, e.accuracy), (0.0, 0.0, 0.0, 0.0));
        let both_empty = vec![vec![false, false]];
        assert_eq!(example_based(&both_empty, &both_empty).unwrap().accuracy, 1.0);
    }

    #[test]
    fn perfect_prediction_all_ones() {
        let truth = vec![vec![true, false, true], vec![false, true, true]];
        let e = example_based(&truth, &truth).unwrap();
        assert_eq!((e.accuracy, e.precision, e.recall, e.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn strict_threshold() {
        assert_eq!(binarize(&[0.5, 0.5000001, 0.2]), vec![false, true, false]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(example_based(&[vec![true]], &[vec![true, false]]).is_err());
        assert!(mean_accuracy(&[vec![true]], &[]).is_err());
    }
}
