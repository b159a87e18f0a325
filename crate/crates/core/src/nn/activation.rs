use crate::error::{Result, WpalError};
use crate::tape::{BackwardRule, Tape, Var};
use crate::tensor::Tensor;

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct ReluRule;

impl BackwardRule for ReluRule {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let d = inputs[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        vec![Some(d)]
    }
}

pub fn relu(tape: &mut Tape, x: Var) -> Var {
    let value = tape.value(x).map(|v| v.max(0.0));
    tape.push(value, vec![x], Box::new(ReluRule))
}

struct SigmoidRule;

impl BackwardRule for SigmoidRule {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn backward(&self, _inputs: &[&Tensor], output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let d = output.data().iter().zip(g).map(|(&s, &g)| g * s * (1.0 - s)).collect();
        vec![Some(d)]
    }
}

pub fn sigmoid(tape: &mut Tape, x: Var) -> Var {
    let value = tape.value(x).map(sigmoid_scalar);
    tape.push(value, vec![x], Box::new(SigmoidRule))
}

struct MaxPoolRule {
    /// Flat input index of each output's winner.
    argmax: Vec<usize>,
}

impl BackwardRule for MaxPoolRule {
    fn name(&self) -> &'static str {
        "maxpool2x2"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let mut d = vec![0.0; inputs[0].numel()];
        for (&src, &gv) in self.argmax.iter().zip(g) {
            d[src] += gv;
        }
        vec![Some(d)]
    }
}

/// Non-overlapping 2×2 max pooling on a `C×H×W` map. A trailing odd row or
/// column is dropped; ties go to the lowest row, then the lowest column.
pub fn maxpool2x2(tape: &mut Tape, x: Var) -> Result<Var> {
    let t = tape.value(x);
    if t.rank() != 3 || t.shape()[1] < 2 || t.shape()[2] < 2 {
        return Err(WpalError::InvalidShape {
            op: "maxpool2x2",
            detail: format!("needs C×H×W with H, W ≥ 2, got {:?}", t.shape()),
        });
    }
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let data = t.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    let value = Tensor::new(vec![c, oh, ow], out).expect("pool shape");
    Ok(tape.push(value, vec![x], Box::new(MaxPoolRule { argmax })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![-1.0, 2.0]));
        let y = relu(&mut tape, x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let big = sigmoid_scalar(-800.0);
        assert!(big >= 0.0 && big.is_finite());
        assert_eq!(sigmoid_scalar(800.0), 1.0);
    }

    #[test]
    fn maxpool_single_window() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = maxpool2x2(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[4.0]);
    }

    #[test]
    fn maxpool_drops_odd_edge_and_breaks_ties_low() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 3, 3], vec![5.0, 5.0, 9.0, 5.0, 5.0, 9.0, 9.0, 9.0, 9.0]).unwrap());
        let y = maxpool2x2(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_rejects_tiny_maps() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 1, 4]));
        assert!(maxpool2x2(&mut tape, x).is_err());
    }
}
