//! Pointwise and structural operations.

use rand::Rng;

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| *x * *y).collect();
    Tensor::from_parts(a.dims().to_vec(), data)
}

pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(x, g)| if *x > T::zero() { *g } else { T::zero() })
        .collect();
    Tensor::from_parts(x.dims().to_vec(), data)
}

pub(crate) fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(y, g)| *g * *y * (T::one() - *y))
        .collect();
    Tensor::from_parts(y.dims().to_vec(), data)
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", y, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(sigmoid);
        self.push("sigmoid", y, Op::Sigmoid(x))
    }

    /// Hadamard product of equally-shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("mul", a, b)?;
        let y = hadamard(self.value(a), self.value(b));
        self.push("mul", y, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let y = Tensor::from_parts(self.dims(a).to_vec(), data);
        self.push("add", y, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let y = self.value(x).map(|v| v * factor);
        self.push("scale", y, Op::Scale(x, factor))
    }

    /// Channel-wise concatenation of two `[B, C, H, W]` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = Tensor::concat_channels(self.value(a), self.value(b))?;
        self.push("concat_channels", y, Op::ConcatChannels(a, b))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(dims)?;
        self.push("reshape", y, Op::Reshape(x))
    }

    /// Collapses every axis after the first: `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let dims = self.dims(x);
        let rest: usize = dims[1..].iter().product();
        let target = [dims[0], rest.max(1)];
        self.reshape(x, &target)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.value(x).sum());
        self.push("sum", y, Op::Sum(x))
    }

    /// Inverted dropout: in training mode each unit is zeroed with probability
    /// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid("dropout", format!("rate {rate} must lie in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| *v * *m)
            .collect();
        let y = Tensor::from_parts(self.dims(x).to_vec(), data);
        self.push("dropout", y, Op::Dropout { input: x, mask })
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(mismatch(
                op,
                format!("operand dims differ: {:?} vs {:?}", self.dims(a), self.dims(b)),
            ));
        }
        Ok(())
    }
}
