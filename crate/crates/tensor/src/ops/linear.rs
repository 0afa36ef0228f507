//! Affine layer `y = x W^T + b`.

use crate::error::{mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::scalar::{matmul, Scalar};
use crate::tensor::{dims2, Tensor};

impl<T: Scalar> Graph<T> {
    /// `[B, D] x [O, D]^T + [O] -> [B, O]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (b, d) = dims2("linear", self.value(input))?;
        let (o, wd) = dims2("linear", self.value(weight))?;
        if wd != d {
            return Err(mismatch(
                "linear",
                format!("input width {d} does not match weight width {wd}"),
            ));
        }
        if self.dims(bias) != [o] {
            return Err(mismatch(
                "linear",
                format!("bias dims {:?} do not match {o} outputs", self.dims(bias)),
            ));
        }
        let mut out = Vec::with_capacity(b * o);
        for _ in 0..b {
            out.extend_from_slice(self.value(bias).data());
        }
        matmul(
            b,
            d,
            o,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            true,
            &mut out,
            true,
        );
        self.push(
            "linear",
            Tensor::from_parts(vec![b, o], out),
            Op::Linear {
                input,
                weight,
                bias,
            },
        )
    }
}

type LinearGrads<T> = (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>);

pub(crate) fn backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad: &Tensor<T>,
    want_x: bool,
    want_w: bool,
    want_b: bool,
) -> LinearGrads<T> {
    let (b, d) = (x.dims()[0], x.dims()[1]);
    let o = w.dims()[0];
    let dx = want_x.then(|| {
        let mut dx = vec![T::zero(); b * d];
        matmul(b, o, d, grad.data(), false, w.data(), false, &mut dx, false);
        Tensor::from_parts(vec![b, d], dx)
    });
    let dw = want_w.then(|| {
        let mut dw = vec![T::zero(); o * d];
        matmul(o, b, d, grad.data(), true, x.data(), false, &mut dw, false);
        Tensor::from_parts(vec![o, d], dw)
    });
    let db = want_b.then(|| {
        let mut db = vec![T::zero(); o];
        for row in grad.data().chunks(o) {
            for (acc, g) in db.iter_mut().zip(row) {
                *acc += *g;
            }
        }
        Tensor::from_parts(vec![o], db)
    });
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, w: Tensor<f64>, b: Tensor<f64>) -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let (x, w, b) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.linear(x, w, b)?;
        Ok(g.value(y).clone())
    }

    #[test]
    fn identity_weight_passes_input() {
        let x = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(run(x.clone(), w, Tensor::zeros(&[3]).unwrap()).unwrap(), x);
    }

    #[test]
    fn zero_weight_broadcasts_bias() {
        let x = Tensor::from_fn(&[3, 4], |i| i as f64).unwrap();
        let b = Tensor::new(&[2], vec![0.25, -4.0]).unwrap();
        let y = run(x, Tensor::zeros(&[2, 4]).unwrap(), b).unwrap();
        assert_eq!(y.data(), &[0.25, -4.0, 0.25, -4.0, 0.25, -4.0]);
    }

    #[test]
    fn width_mismatch_rejected() {
        let err = run(
            Tensor::zeros(&[1, 3]).unwrap(),
            Tensor::zeros(&[2, 4]).unwrap(),
            Tensor::zeros(&[2]).unwrap(),
        );
        assert!(err.is_err());
    }
}
