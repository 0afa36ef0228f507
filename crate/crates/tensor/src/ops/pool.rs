//! Max pooling (fixed and adaptive) and global average pooling.

use crate::error::{invalid, Result};
use crate::graph::{Graph, Op, Var};
use crate::scalar::Scalar;
use crate::tensor::{dims4, Tensor};

/// Window and stride for one spatial axis of a pooling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolPlan {
    pub window: usize,
    pub stride: usize,
}

/// Window/stride pair mapping `in_extent` positions onto exactly `out_extent`
/// pooled outputs.
///
/// `stride = floor(in / out)` and `window = in - stride * (out - 1)`, so the
/// last window ends exactly at the input boundary. Whenever the remainder of
/// `in / out` is at most one this equals the usual `ceil(in / out)` window; for
/// larger remainders the window widens instead of leaving trailing rows unread.
pub fn adaptive_pool_plan(in_extent: usize, out_extent: usize) -> Result<PoolPlan> {
    if out_extent == 0 || in_extent == 0 {
        return Err(invalid("adaptive_pool_plan", "extents must be positive"));
    }
    if out_extent > in_extent {
        return Err(invalid(
            "adaptive_pool_plan",
            format!("output extent {out_extent} exceeds input extent {in_extent}"),
        ));
    }
    let stride = in_extent / out_extent;
    let window = in_extent - stride * (out_extent - 1);
    Ok(PoolPlan { window, stride })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub rows: PoolPlan,
    pub cols: PoolPlan,
    pub oh: usize,
    pub ow: usize,
}

impl<T: Scalar> Graph<T> {
    /// Square max pooling. Gradients flow to the first (row-major) maximum of
    /// each window.
    pub fn max_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let plan = PoolPlan { window, stride };
        let (_, _, h, w) = dims4("max_pool2d", self.value(x))?;
        if window == 0 || stride == 0 {
            return Err(invalid("max_pool2d", "window and stride must be positive"));
        }
        if window > h || window > w {
            return Err(invalid(
                "max_pool2d",
                format!("window {window} exceeds spatial extent {h}x{w}"),
            ));
        }
        let geom = PoolGeom {
            rows: plan,
            cols: plan,
            oh: (h - window) / stride + 1,
            ow: (w - window) / stride + 1,
        };
        self.max_pool_with(x, geom)
    }

    /// Max pooling to a fixed `out_h x out_w` grid with per-axis plans from
    /// [`adaptive_pool_plan`].
    pub fn adaptive_max_pool2d(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (_, _, h, w) = dims4("adaptive_max_pool2d", self.value(x))?;
        let geom = PoolGeom {
            rows: adaptive_pool_plan(h, out_h)?,
            cols: adaptive_pool_plan(w, out_w)?,
            oh: out_h,
            ow: out_w,
        };
        self.max_pool_with(x, geom)
    }

    fn max_pool_with(&mut self, x: Var, geom: PoolGeom) -> Result<Var> {
        let (b, c, h, w) = dims4("max_pool2d", self.value(x))?;
        let src = self.value(x).data();
        let (oh, ow) = (geom.oh, geom.ow);
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let y0 = oy * geom.rows.stride;
                for ox in 0..ow {
                    let x0 = ox * geom.cols.stride;
                    let mut best = base + y0 * w + x0;
                    for yy in y0..y0 + geom.rows.window {
                        for xx in x0..x0 + geom.cols.window {
                            let idx = base + yy * w + xx;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::from_parts(vec![b, c, oh, ow], out);
        self.push(
            "max_pool2d",
            value,
            Op::MaxPool2d { input: x, argmax },
        )
    }

    /// Spatial mean per channel: `[B, C, H, W] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (b, c, h, w) = dims4("global_avg_pool", self.value(x))?;
        let plane = h * w;
        let count = T::from_usize(plane).unwrap();
        let out = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|p| p.iter().copied().sum::<T>() / count)
            .collect();
        self.push(
            "global_avg_pool",
            Tensor::from_parts(vec![b, c], out),
            Op::GlobalAvgPool(x),
        )
    }
}

pub(crate) fn max_pool_backward<T: Scalar>(in_dims: &[usize], argmax: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let mut dx = vec![T::zero(); in_dims.iter().product()];
    for (g, &idx) in grad.data().iter().zip(argmax) {
        dx[idx] += *g;
    }
    Tensor::from_parts(in_dims.to_vec(), dx)
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(in_dims: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let plane = in_dims[2] * in_dims[3];
    let count = T::from_usize(plane).unwrap();
    let mut dx = Vec::with_capacity(in_dims.iter().product());
    for g in grad.data() {
        let v = *g / count;
        dx.extend(std::iter::repeat(v).take(plane));
    }
    Tensor::from_parts(in_dims.to_vec(), dx)
}
