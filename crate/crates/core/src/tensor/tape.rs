use std::cell::{Ref, RefCell};

use super::{Primitive, Tensor};
use crate::error::{Error, Result};

#[derive(Debug)]
enum NodeKind {
    Leaf,
    Constant,
    Op { prim: Primitive, inputs: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    kind: NodeKind,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of tensor operations.
///
/// Nodes are stored in creation order, so every node's inputs precede it
/// and a reverse sweep over the vector is a valid backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, kind: NodeKind, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            kind,
            value,
            requires_grad,
        });
        Var {
            tape: self,
            index: nodes.len() - 1,
        }
    }

    /// Records a differentiation target.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(NodeKind::Leaf, value, true)
    }

    /// Records a value that gradients never flow into.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(NodeKind::Constant, value, false)
    }

    /// Evaluates `prim` on recorded inputs and records the result.
    pub fn apply<'t>(&'t self, prim: Primitive, inputs: &[Var<'t>]) -> Result<Var<'t>> {
        for v in inputs {
            self.check_owner(*v)?;
        }
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let values: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.index].value).collect();
            let requires_grad = inputs.iter().any(|v| nodes[v.index].requires_grad);
            (prim.forward(&values)?, requires_grad)
        };
        let inputs = inputs.iter().map(|v| v.index).collect();
        Ok(self.push(NodeKind::Op { prim, inputs }, value, requires_grad))
    }

    fn check_owner(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(v.tape, self) && v.index < self.len() {
            Ok(())
        } else {
            Err(Error::Lookup(format!(
                "variable #{} is not recorded on this tape",
                v.index
            )))
        }
    }

    /// Gradient of the scalar `output` with respect to the leaf `wrt`.
    pub fn gradient(&self, output: Var<'_>, wrt: Var<'_>) -> Result<Tensor> {
        Ok(self.gradients(output, &[wrt])?.pop().expect("one target"))
    }

    /// Gradients of the scalar `output` with respect to several leaves, from
    /// a single backward sweep.
    pub fn gradients(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<Tensor>> {
        self.check_owner(output)?;
        for w in wrt {
            self.check_owner(*w)?;
        }
        let nodes = self.nodes.borrow();
        for w in wrt {
            if !matches!(nodes[w.index].kind, NodeKind::Leaf) {
                return Err(Error::Lookup(format!("variable #{} is not a leaf", w.index)));
            }
        }
        let out = &nodes[output.index];
        if out.value.len() != 1 {
            return Err(Error::Contract(format!(
                "gradient needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor>> = (0..=output.index).map(|_| None).collect();
        grads[output.index] = Some(Tensor::full(out.value.shape(), 1.0));
        for idx in (0..=output.index).rev() {
            let node = &nodes[idx];
            let NodeKind::Op { prim, inputs } = &node.kind else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let in_values: Vec<&Tensor> = inputs.iter().map(|&i| &nodes[i].value).collect();
            let in_grads = prim.backward(&in_values, &node.value, &grad);
            for (&i, g) in inputs.iter().zip(in_grads) {
                if !nodes[i].requires_grad {
                    continue;
                }
                match &mut grads[i] {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += v;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|w| {
                grads
                    .get(w.index)
                    .and_then(Clone::clone)
                    .unwrap_or_else(|| Tensor::zeros(nodes[w.index].value.shape()))
            })
            .collect())
    }

    /// Recomputes every op node from the recorded leaves and constants.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match &node.kind {
                NodeKind::Leaf | NodeKind::Constant => node.value.clone(),
                NodeKind::Op { prim, inputs } => {
                    let ins: Vec<&Tensor> = inputs.iter().map(|&i| &values[i]).collect();
                    prim.forward(&ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Values currently recorded, in tape order.
    pub fn recorded_values(&self) -> Vec<Tensor> {
        self.nodes.borrow().iter().map(|n| n.value.clone()).collect()
    }

    /// Returns true if every op node's inputs were recorded before it.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes.borrow().iter().enumerate().all(|(idx, n)| match &n.kind {
            NodeKind::Op { inputs, .. } => inputs.iter().all(|&i| i < idx),
            _ => true,
        })
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |nodes| &nodes[self.index].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn unary(self, prim: Primitive) -> Result<Var<'t>> {
        self.tape.apply(prim, &[self])
    }

    fn binary(self, prim: Primitive, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(prim, &[self, other])
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::MatMul, other)
    }

    pub fn conv2d(self, kernel: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::Conv2d, kernel)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::Add, other)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::Sub, other)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::Mul, other)
    }

    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::AddBias, bias)
    }

    pub fn squared_error(self, target: Var<'t>) -> Result<Var<'t>> {
        self.binary(Primitive::SquaredError, target)
    }

    pub fn scale(self, factor: f64) -> Result<Var<'t>> {
        self.unary(Primitive::Scale(factor))
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.scale(-1.0)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(Primitive::Sigmoid)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(Primitive::Tanh)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(Primitive::Relu)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        self.unary(Primitive::Sqrt)
    }

    pub fn spatial_mean(self) -> Result<Var<'t>> {
        self.unary(Primitive::SpatialMean)
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.unary(Primitive::Sum)
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        self.unary(Primitive::Slice { axis, start, len })
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        self.unary(Primitive::Reshape(shape.to_vec()))
    }
}

/// Concatenates recorded tensors along `axis`.
pub fn concat<'t>(axis: usize, parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
    first.tape.apply(Primitive::Concat { axis }, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_of_squares() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = x.mul(x).unwrap().sum().unwrap();
        assert_eq!(tape.gradient(y, x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let c = tape.constant(Tensor::vector(vec![4.0, 5.0]));
        let y = c.sum().unwrap();
        assert_eq!(tape.gradient(y, x).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = x.tanh().unwrap();
        assert!(matches!(tape.gradient(y, x), Err(Error::Contract(_))));
    }

    #[test]
    fn foreign_variable_is_a_lookup_error() {
        let tape = Tape::new();
        let other = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0]));
        let z = other.leaf(Tensor::vector(vec![1.0]));
        let y = x.sum().unwrap();
        assert!(matches!(tape.gradient(y, z), Err(Error::Lookup(_))));
        // Non-leaf targets are rejected too.
        assert!(matches!(tape.gradient(y, y), Err(Error::Lookup(_))));
    }

    #[test]
    fn reused_leaf_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.0]));
        let y = x.add(x).unwrap().add(x).unwrap().sum().unwrap();
        assert_eq!(tape.gradient(y, x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn replay_matches_record() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -1.2, 2.0]));
        let w = tape.constant(Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap());
        let h = x.reshape(&[1, 3]).unwrap().matmul(w).unwrap().sigmoid().unwrap();
        let _ = h.sum().unwrap();
        assert!(tape.is_topologically_ordered());
        assert_eq!(tape.replay().unwrap(), tape.recorded_values());
    }
}
