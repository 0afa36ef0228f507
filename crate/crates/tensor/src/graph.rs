use crate::error::{Result, TensorError};
use crate::ops::conv::{self, ConvGeom};
use crate::ops::pool;
use crate::ops::{elementwise, linear, loss};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
///
/// Only meaningful for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    Sigmoid(Var),
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Mul(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    ConcatChannels(Var, Var),
    Reshape(Var),
    Sum(Var),
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    SigmoidBce {
        logits: Var,
        labels: Vec<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                kernel,
                bias,
                ..
            } => vec![*input, *kernel, *bias],
            Op::Linear {
                input,
                weight,
                bias,
            } => vec![*input, *weight, *bias],
            Op::Mul(a, b) | Op::Add(a, b) | Op::ConcatChannels(a, b) => vec![*a, *b],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::GlobalAvgPool(x)
            | Op::Scale(x, _)
            | Op::Reshape(x)
            | Op::Sum(x) => vec![*x],
            Op::MaxPool2d { input, .. } | Op::Dropout { input, .. } => vec![*input],
            Op::SoftmaxCrossEntropy { logits, .. } | Op::SigmoidBce { logits, .. } => {
                vec![*logits]
            }
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Tape of operations for one forward pass.
///
/// Each forward pass builds its own graph; graphs share no mutable state, so
/// distinct graphs can be evaluated on different threads.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf (a parameter or a differentiation variable).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        value.ensure_finite(op_name)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse-mode pass from a scalar output.
    ///
    /// Nodes are visited once each in reverse recording order, which is a
    /// reverse topological order because inputs are always recorded first.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(TensorError::NonScalar(out.dims().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::from_parts(out.dims().to_vec(), vec![T::one()]));

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            grad.ensure_finite("backward")?;
            self.propagate(&node.op, &node.value, &grad, &mut grads)?;
            grads[id] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        debug_assert_eq!(g.dims(), self.nodes[v.0].value.dims());
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        op: &Op<T>,
        value: &Tensor<T>,
        grad: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (dx, dk, db) = conv::backward(
                    geom,
                    self.value(*input),
                    self.value(*kernel),
                    grad,
                    self.requires_grad(*input),
                    self.requires_grad(*kernel),
                    self.requires_grad(*bias),
                );
                for (v, g) in [(*input, dx), (*kernel, dk), (*bias, db)] {
                    if let Some(g) = g {
                        self.accumulate(grads, v, g);
                    }
                }
            }
            Op::Relu(x) => {
                let g = elementwise::relu_backward(self.value(*x), grad);
                self.accumulate(grads, *x, g);
            }
            Op::Sigmoid(x) => {
                let g = elementwise::sigmoid_backward(value, grad);
                self.accumulate(grads, *x, g);
            }
            Op::MaxPool2d {
                input, argmax, ..
            } => {
                let g = pool::max_pool_backward(self.value(*input).dims(), argmax, grad);
                self.accumulate(grads, *input, g);
            }
            Op::GlobalAvgPool(x) => {
                let g = pool::global_avg_pool_backward(self.value(*x).dims(), grad);
                self.accumulate(grads, *x, g);
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (dx, dw, db) = linear::backward(
                    self.value(*input),
                    self.value(*weight),
                    grad,
                    self.requires_grad(*input),
                    self.requires_grad(*weight),
                    self.requires_grad(*bias),
                );
                for (v, g) in [(*input, dx), (*weight, dw), (*bias, db)] {
                    if let Some(g) = g {
                        self.accumulate(grads, v, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, elementwise::hadamard(grad, self.value(*b)));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, elementwise::hadamard(grad, self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, grad.clone());
                self.accumulate(grads, *b, grad.clone());
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(grads, *x, grad.map(|g| g * s));
            }
            Op::ConcatChannels(a, b) => {
                let ca = self.value(*a).dims()[1];
                let (ga, gb) = grad.split_channels(ca)?;
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Reshape(x) => {
                let g = grad.clone().reshape(self.value(*x).dims())?;
                self.accumulate(grads, *x, g);
            }
            Op::Sum(x) => {
                let g = Tensor::full(self.value(*x).dims(), grad.data()[0])?;
                self.accumulate(grads, *x, g);
            }
            Op::Dropout { input, mask } => {
                let data = grad.data().iter().zip(mask).map(|(g, m)| *g * *m).collect();
                self.accumulate(grads, *input, Tensor::from_parts(grad.dims().to_vec(), data));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
            } => {
                let g = loss::softmax_cross_entropy_backward(
                    self.value(*logits).dims(),
                    probs,
                    labels,
                    grad.data()[0],
                );
                self.accumulate(grads, *logits, g);
            }
            Op::SigmoidBce { logits, labels } => {
                let g = loss::sigmoid_bce_backward(self.value(*logits), labels, grad.data()[0]);
                self.accumulate(grads, *logits, g);
            }
        }
        Ok(())
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Gradients<T> {
    /// Gradient of the output with respect to `v`; `None` when `v` does not
    /// require a gradient or does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
