use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::{dims2, Tensor};

/// Bilinear resampling of a `[H, W]` map on a corner-aligned grid.
///
/// Output corners coincide with input corners, so constant maps stay exactly
/// constant and resampling to the same size is the identity.
pub fn bilinear_upsample<T: Scalar>(map: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (h, w) = dims2("bilinear_upsample", map)?;
    if out_h == 0 || out_w == 0 {
        return Err(invalid("bilinear_upsample", "output extents must be positive"));
    }
    let src = map.data();
    let ys = sample_grid(h, out_h);
    let xs = sample_grid(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let fy = T::from_f64_lossy(fy);
            let fx = T::from_f64_lossy(fx);
            let top = src[y0 * w + x0] + (src[y0 * w + x1] - src[y0 * w + x0]) * fx;
            let bottom = src[y1 * w + x0] + (src[y1 * w + x1] - src[y1 * w + x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    Tensor::new(&[out_h, out_w], out)
}

/// Per output index: the two neighbouring source indices and the blend weight.
fn sample_grid(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|i| {
            if input == 1 || output == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (input - 1) as f64 / (output - 1) as f64;
            let lo = (pos.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_stays_constant() {
        let m = Tensor::full(&[13, 13], 0.375f32).unwrap();
        let up = bilinear_upsample(&m, 64, 47).unwrap();
        assert_eq!(up.dims(), &[64, 47]);
        assert!(up.data().iter().all(|v| *v == 0.375));
    }

    #[test]
    fn same_size_is_identity() {
        let m = Tensor::from_fn(&[4, 5], |i| (i as f64).cos()).unwrap();
        assert_eq!(bilinear_upsample(&m, 4, 5).unwrap(), m);
    }

    #[test]
    fn midpoint_is_average() {
        let m = Tensor::new(&[2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = bilinear_upsample(&m, 2, 3).unwrap();
        assert_eq!(up.data(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_pixel_broadcasts() {
        let m = Tensor::new(&[1, 1], vec![2.0f64]).unwrap();
        let up = bilinear_upsample(&m, 3, 3).unwrap();
        assert!(up.data().iter().all(|v| *v == 2.0));
    }
}
