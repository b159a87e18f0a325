//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value, the handles of
//! its inputs and a backward rule. Nodes are only ever appended, so the tape
//! order is already a topological order and `backward` simply replays it in
//! reverse. Gradients land in the grad slot of each node's tensor and add up
//! across fan-out.

use crate::error::{Result, WpalError};
use crate::linalg::{gemm, MatRef};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps the upstream gradient of a node to gradients of its inputs.
///
/// `needs[i]` is false when input `i` does not require a gradient; the rule
/// may return `None` for it and skip the work.
pub trait BackwardRule {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_out: &[f64],
        needs: &[bool],
    ) -> Vec<Option<Vec<f64>>>;
}

/// Backward rule from a closure; handy for one-off ops and test fixtures.
pub struct FnRule<F> {
    name: &'static str,
    f: F,
}

impl<F> FnRule<F>
where
    F: Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>,
{
    pub fn new(name: &'static str, f: F) -> Self {
        FnRule { name, f }
    }
}

impl<F> BackwardRule for FnRule<F>
where
    F: Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>,
{
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        (self.f)(inputs, output, grad_out).into_iter().map(Some).collect()
    }
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    rule: Option<Box<dyn BackwardRule>>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked. Any gradient already held by `value`
    /// is dropped: the tape's gradients describe this tape only.
    pub fn leaf(&mut self, mut value: Tensor) -> Var {
        value.clear_grad();
        self.push_node(value, Vec::new(), None, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, mut value: Tensor) -> Var {
        value.clear_grad();
        self.push_node(value, Vec::new(), None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        let t = &mut self.nodes[v.0].value;
        let g = t.grad().map(|g| g.to_vec());
        t.clear_grad();
        g
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].rule.as_ref().map_or("leaf", |r| r.name())
    }

    /// Records an operation. The node tracks gradients iff any input does.
    pub fn push(&mut self, value: Tensor, inputs: Vec<Var>, rule: Box<dyn BackwardRule>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(value, inputs, Some(rule), requires_grad)
    }

    fn push_node(
        &mut self,
        value: Tensor,
        inputs: Vec<Var>,
        rule: Option<Box<dyn BackwardRule>>,
        requires_grad: bool,
    ) -> Var {
        debug_assert!(inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(Node {
            value,
            inputs,
            rule,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) to every tracked node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = &self.nodes[loss.0].value;
        if !lt.is_scalar() {
            return Err(WpalError::InvalidShape {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", lt.shape()),
            });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].value.accumulate_grad(&[1.0]);

        for i in (0..=loss.0).rev() {
            if self.nodes[i].rule.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[i].value.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let node = &self.nodes[i];
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let rule = node.rule.as_ref().unwrap();
            let grads = rule.backward(&inputs, &node.value, &upstream, &needs);
            debug_assert_eq!(grads.len(), node.inputs.len(), "rule {} arity", rule.name());
            let targets = node.inputs.clone();
            for (v, g) in targets.into_iter().zip(grads) {
                if let Some(g) = g {
                    if self.nodes[v.0].requires_grad {
                        self.nodes[v.0].value.accumulate_grad(&g);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Div, a, b)
    }

    /// Element-wise binary op. Equal shapes, or one side holding a single
    /// element that broadcasts against the other.
    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.is_scalar() {
            ta.shape().to_vec()
        } else if ta.is_scalar() {
            tb.shape().to_vec()
        } else {
            return Err(WpalError::ShapeMismatch {
                op: op.name(),
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        };
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let (sa, sb) = (da.len() == 1 && n != 1, db.len() == 1 && n != 1);
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let x = if sa { da[0] } else { da[i] };
                let y = if sb { db[0] } else { db[i] };
                op.apply(x, y)
            })
            .collect();
        let value = Tensor::new(shape, data).expect("broadcast shape");
        Ok(self.push(value, vec![a, b], Box::new(ElementwiseRule { op, sa, sb })))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(WpalError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(MatRef::new(ta.data(), m, k), MatRef::new(tb.data(), k, n), 0.0, &mut out);
        let value = Tensor::new(vec![m, n], out).expect("matmul shape");
        Ok(self.push(value, vec![a, b], Box::new(MatmulRule { m, k, n })))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), vec![a], Box::new(SumRule))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, vec![a], Box::new(ReshapeRule)))
    }

    /// Flattens and concatenates the inputs into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        for &p in parts {
            let d = self.value(p).data();
            lens.push(d.len());
            data.extend_from_slice(d);
        }
        self.push(Tensor::from_vec(data), parts.to_vec(), Box::new(ConcatRule { lens }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        }
    }
}

struct ElementwiseRule {
    op: BinaryOp,
    sa: bool,
    sb: bool,
}

impl BackwardRule for ElementwiseRule {
    fn name(&self) -> &'static str {
        self.op.name()
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (da, db) = (inputs[0].data(), inputs[1].data());
        let x = |i: usize| if self.sa { da[0] } else { da[i] };
        let y = |i: usize| if self.sb { db[0] } else { db[i] };
        let n = g.len();
        let local = |wrt_a: bool| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let d = match (self.op, wrt_a) {
                        (BinaryOp::Add, _) => 1.0,
                        (BinaryOp::Sub, true) => 1.0,
                        (BinaryOp::Sub, false) => -1.0,
                        (BinaryOp::Mul, true) => y(i),
                        (BinaryOp::Mul, false) => x(i),
                        (BinaryOp::Div, true) => 1.0 / y(i),
                        (BinaryOp::Div, false) => -x(i) / (y(i) * y(i)),
                    };
                    g[i] * d
                })
                .collect()
        };
        let reduce = |v: Vec<f64>, scalar: bool| if scalar { vec![v.iter().sum()] } else { v };
        vec![
            needs[0].then(|| reduce(local(true), self.sa)),
            needs[1].then(|| reduce(local(false), self.sb)),
        ]
    }
}

struct MatmulRule {
    m: usize,
    k: usize,
    n: usize,
}

impl BackwardRule for MatmulRule {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let gm = MatRef::new(g, m, n);
        let ga = needs[0].then(|| {
            let mut out = vec![0.0; m * k];
            gemm(gm, MatRef::new(inputs[1].data(), k, n).t(), 0.0, &mut out);
            out
        });
        let gb = needs[1].then(|| {
            let mut out = vec![0.0; k * n];
            gemm(MatRef::new(inputs[0].data(), m, k).t(), gm, 0.0, &mut out);
            out
        });
        vec![ga, gb]
    }
}

struct SumRule;

impl BackwardRule for SumRule {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![g[0]; inputs[0].numel()])]
    }
}

struct ReshapeRule;

impl BackwardRule for ReshapeRule {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        vec![Some(g.to_vec())]
    }
}

struct ConcatRule {
    lens: Vec<usize>,
}

impl BackwardRule for ConcatRule {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let mut off = 0;
        self.lens
            .iter()
            .zip(needs)
            .map(|(&len, &need)| {
                let part = need.then(|| g[off..off + len].to_vec());
                off += len;
                part
            })
            .collect()
    }
}
