//! 2-D convolution via im2col + GEMM.

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::scalar::{matmul, Scalar};
use crate::tensor::{dims4, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output extent of a convolution or pooling window sweep, if the window fits.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.positions();
    let pad = g.pad as isize;
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - pad;
                    let dst = &mut col[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + j) as isize - pad;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.positions();
    let pad = g.pad as isize;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * p;
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &col[row + oy * g.ow..row + (oy + 1) * g.ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * g.stride + j) as isize - pad;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += *s;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation of `[B, Cin, H, W]` input with a `[Cout, Cin, kh, kw]`
    /// kernel plus per-channel bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (batch, cin, h, w) = dims4("conv2d", self.value(input))?;
        let (cout, kcin, kh, kw) = dims4("conv2d", self.value(kernel))?;
        if kcin != cin {
            return Err(mismatch(
                "conv2d",
                format!("input has {cin} channels but kernel expects {kcin}"),
            ));
        }
        if self.dims(bias) != [cout] {
            return Err(mismatch(
                "conv2d",
                format!("bias dims {:?} do not match {cout} output channels", self.dims(bias)),
            ));
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be positive"));
        }
        let (Some(oh), Some(ow)) = (
            conv_output_extent(h, kh, stride, pad),
            conv_output_extent(w, kw, stride, pad),
        ) else {
            return Err(invalid(
                "conv2d",
                format!("{kh}x{kw} kernel does not fit {h}x{w} input with padding {pad}"),
            ));
        };
        let geom = ConvGeom {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        };
        let out = forward(&geom, self.value(input), self.value(kernel), self.value(bias));
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
        )
    }
}

fn forward<T: Scalar>(g: &ConvGeom, x: &Tensor<T>, k: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (patch, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let mut out = vec![T::zero(); g.batch * out_stride];
    let mut col = vec![T::zero(); patch * p];
    for n in 0..g.batch {
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], g, &mut col);
        let dst = &mut out[n * out_stride..(n + 1) * out_stride];
        for (co, bias) in b.data().iter().enumerate() {
            dst[co * p..(co + 1) * p].fill(*bias);
        }
        matmul(g.cout, patch, p, k.data(), false, &col, false, dst, true);
    }
    Tensor::from_parts(vec![g.batch, g.cout, g.oh, g.ow], out)
}

type ConvGrads<T> = (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>);

pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad: &Tensor<T>,
    want_x: bool,
    want_k: bool,
    want_b: bool,
) -> ConvGrads<T> {
    let (patch, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let mut dx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut dk = want_k.then(|| vec![T::zero(); k.len()]);
    let mut db = want_b.then(|| vec![T::zero(); g.cout]);
    let mut col = vec![T::zero(); patch * p];
    for n in 0..g.batch {
        let gy = &grad.data()[n * out_stride..(n + 1) * out_stride];
        if let Some(db) = db.as_mut() {
            for (co, acc) in db.iter_mut().enumerate() {
                *acc += gy[co * p..(co + 1) * p].iter().copied().sum::<T>();
            }
        }
        if let Some(dk) = dk.as_mut() {
            im2col(&x.data()[n * in_stride..(n + 1) * in_stride], g, &mut col);
            // dK (cout x patch) += dY (cout x p) * col^T (p x patch)
            matmul(g.cout, p, patch, gy, false, &col, true, dk, true);
        }
        if let Some(dx) = dx.as_mut() {
            // dcol (patch x p) = K^T (patch x cout) * dY (cout x p)
            matmul(patch, g.cout, p, k.data(), true, gy, false, &mut col, false);
            col2im(&col, g, &mut dx[n * in_stride..(n + 1) * in_stride]);
        }
    }
    (
        dx.map(|d| Tensor::from_parts(x.dims().to_vec(), d)),
        dk.map(|d| Tensor::from_parts(k.dims().to_vec(), d)),
        db.map(|d| Tensor::from_parts(vec![g.cout], d)),
    )
}
