use crate::error::{invalid, mismatch, Result, TensorError};
use crate::scalar::Scalar;

/// Dense row-major array of rank 1 to 4.
///
/// Images use the `[batch, channel, height, width]` layout. A tensor is a
/// plain value; gradients live in [`Gradients`](crate::Gradients), keyed by
/// the graph variable that produced the value.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

pub const MAX_RANK: usize = 4;

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(TensorError::InvalidShape {
            dims: dims.to_vec(),
            reason: format!("rank must be between 1 and {MAX_RANK}"),
        });
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(TensorError::InvalidShape {
            dims: dims.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_dims(dims)?;
        if data.len() != len {
            return Err(TensorError::InvalidShape {
                dims: dims.to_vec(),
                reason: format!("data length {} does not equal {len}", data.len()),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds a tensor whose dims are already known to be valid.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: (0..len).map(&mut f).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(TensorError::NonScalar(self.dims.clone()));
        }
        Ok(self.data[0])
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        if len != self.data.len() {
            return Err(mismatch(
                "reshape",
                format!("cannot view {:?} as {:?}", self.dims, dims),
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    /// Slice `[index]` along the leading axis, dropping that axis.
    ///
    /// A rank-1 tensor yields a one-element tensor.
    pub fn index_first(&self, index: usize) -> Result<Self> {
        let outer = self.dims[0];
        if index >= outer {
            return Err(invalid(
                "index_first",
                format!("index {index} out of range for leading extent {outer}"),
            ));
        }
        let inner = self.data.len() / outer;
        let dims = if self.dims.len() == 1 {
            vec![1]
        } else {
            self.dims[1..].to_vec()
        };
        Ok(Self {
            dims,
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| invalid("stack", "no tensors to stack"))?;
        if first.rank() == MAX_RANK {
            return Err(invalid("stack", "stacking would exceed the maximum rank"));
        }
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.dims != first.dims {
                return Err(mismatch(
                    "stack",
                    format!("expected {:?}, found {:?}", first.dims, t.dims),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Self { dims, data })
    }

    /// Concatenates two `[B, C, H, W]` tensors along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let (ab, ac, ah, aw) = dims4("concat_channels", a)?;
        let (bb, bc, bh, bw) = dims4("concat_channels", b)?;
        if (ab, ah, aw) != (bb, bh, bw) {
            return Err(mismatch(
                "concat_channels",
                format!("batch/spatial extents differ: {:?} vs {:?}", a.dims, b.dims),
            ));
        }
        let plane = ah * aw;
        let mut data = Vec::with_capacity(a.len() + b.len());
        for n in 0..ab {
            data.extend_from_slice(&a.data[n * ac * plane..(n + 1) * ac * plane]);
            data.extend_from_slice(&b.data[n * bc * plane..(n + 1) * bc * plane]);
        }
        Ok(Self::from_parts(vec![ab, ac + bc, ah, aw], data))
    }

    /// Inverse of [`concat_channels`](Self::concat_channels): splits off the
    /// first `at` channels.
    pub fn split_channels(&self, at: usize) -> Result<(Self, Self)> {
        let (b, c, h, w) = dims4("split_channels", self)?;
        if at == 0 || at >= c {
            return Err(invalid(
                "split_channels",
                format!("split point {at} must lie strictly inside 0..{c}"),
            ));
        }
        let plane = h * w;
        let mut first = Vec::with_capacity(b * at * plane);
        let mut second = Vec::with_capacity(b * (c - at) * plane);
        for n in 0..b {
            let base = n * c * plane;
            first.extend_from_slice(&self.data[base..base + at * plane]);
            second.extend_from_slice(&self.data[base + at * plane..base + c * plane]);
        }
        Ok((
            Self::from_parts(vec![b, at, h, w], first),
            Self::from_parts(vec![b, c - at, h, w], second),
        ))
    }
}

pub(crate) fn dims4<T>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match t.dims[..] {
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(mismatch(
            op,
            format!("expected a [B, C, H, W] tensor, found dims {:?}", t.dims),
        )),
    }
}

pub(crate) fn dims2<T>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.dims[..] {
        [r, c] => Ok((r, c)),
        _ => Err(mismatch(
            op,
            format!("expected a rank-2 tensor, found dims {:?}", t.dims),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::zeros(&[0, 2]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1]).is_err());
        assert!(Tensor::<f32>::zeros(&[]).is_err());
    }

    #[test]
    fn concat_then_split_recovers_inputs() {
        let a = Tensor::<f32>::from_fn(&[2, 1, 2, 2], |i| i as f32).unwrap();
        let b = Tensor::<f32>::from_fn(&[2, 3, 2, 2], |i| -(i as f32)).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.dims(), &[2, 4, 2, 2]);
        let (x, y) = c.split_channels(1).unwrap();
        assert_eq!(x, a);
        assert_eq!(y, b);
    }

    #[test]
    fn stack_and_index_are_inverse() {
        let a = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64).unwrap();
        let b = a.map(|v| v * 2.0);
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.dims(), &[2, 2, 3]);
        assert_eq!(s.index_first(1).unwrap(), b);
    }
}
