use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the entry with the largest error.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative difference `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the reverse-mode gradient of a scalar function against central
/// finite differences with step [`FD_STEP`], in 64-bit arithmetic.
///
/// `f` receives a fresh graph and the differentiation variable bound to `x`;
/// it must return a one-element output.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    if g.value(out).len() != 1 {
        return Err(TensorError::NonScalar(g.dims(out).to_vec()));
    }
    let analytic: Vec<f64> = match g.backward(out)?.get(xv) {
        Some(t) => t.data().to_vec(),
        None => vec![0.0; x.len()],
    };

    let eval = |probe: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(probe);
        let out = f(&mut g, v)?;
        g.value(out).item()
    };
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * FD_STEP));
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}
