//! Batch-mean classification losses.

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::scalar::Scalar;
use crate::tensor::{dims2, Tensor};

/// Row-wise softmax of a `[B, K]` score matrix.
pub fn softmax_rows<T: Scalar>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut total = T::zero();
        for v in row {
            let e = (*v - m).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, k) = dims2("softmax_cross_entropy", self.value(logits))?;
        if labels.len() != b {
            return Err(mismatch(
                "softmax_cross_entropy",
                format!("{} labels for a batch of {b}", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(
                "softmax_cross_entropy",
                format!("label {bad} outside [0, {k})"),
            ));
        }
        let z = self.value(logits).data();
        let mut total = T::zero();
        for (row, &label) in z.chunks(k).zip(labels) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|v| (*v - m).exp()).sum::<T>().ln();
            total += lse - row[label];
        }
        let loss = total / T::from_usize(b).unwrap();
        let probs = softmax_rows(z, k);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        )
    }

    /// Mean binary cross-entropy of a `[B, 1]` (or `[B]`) logit column,
    /// evaluated as `max(z, 0) - z*y + ln(1 + exp(-|z|))`.
    pub fn sigmoid_bce(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let dims = self.dims(logits).to_vec();
        let b = dims[0];
        if dims.iter().skip(1).any(|&d| d != 1) {
            return Err(mismatch(
                "sigmoid_bce",
                format!("expected a single logit per sample, found dims {dims:?}"),
            ));
        }
        if labels.len() != b {
            return Err(mismatch(
                "sigmoid_bce",
                format!("{} labels for a batch of {b}", labels.len()),
            ));
        }
        if labels.iter().any(|y| *y != T::zero() && *y != T::one()) {
            return Err(invalid("sigmoid_bce", "labels must be 0 or 1"));
        }
        let total: T = self
            .value(logits)
            .data()
            .iter()
            .zip(labels)
            .map(|(z, y)| z.max(T::zero()) - *z * *y + (-z.abs()).exp().ln_1p())
            .sum();
        let loss = total / T::from_usize(b).unwrap();
        self.push(
            "sigmoid_bce",
            Tensor::scalar(loss),
            Op::SigmoidBce {
                logits,
                labels: labels.to_vec(),
            },
        )
    }
}

pub(crate) fn softmax_cross_entropy_backward<T: Scalar>(
    dims: &[usize],
    probs: &[T],
    labels: &[usize],
    upstream: T,
) -> Tensor<T> {
    let (b, k) = (dims[0], dims[1]);
    let scale = upstream / T::from_usize(b).unwrap();
    let mut g: Vec<T> = probs.iter().map(|p| *p * scale).collect();
    for (i, &label) in labels.iter().enumerate() {
        g[i * k + label] -= scale;
    }
    Tensor::from_parts(dims.to_vec(), g)
}

pub(crate) fn sigmoid_bce_backward<T: Scalar>(logits: &Tensor<T>, labels: &[T], upstream: T) -> Tensor<T> {
    let scale = upstream / T::from_usize(labels.len()).unwrap();
    let g = logits
        .data()
        .iter()
        .zip(labels)
        .map(|(z, y)| (super::elementwise::sigmoid(*z) - *y) * scale)
        .collect();
    Tensor::from_parts(logits.dims().to_vec(), g)
}
