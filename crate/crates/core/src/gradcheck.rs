//! Central finite differences for checking analytic gradients.

use crate::params::{Matrix, ParamId, ParamSet};

pub const DEFAULT_STEP: f64 = 1e-6;

/// Numerical gradient of `f` with respect to one parameter block.
pub fn central_difference(params: &mut ParamSet, id: ParamId, f: &dyn Fn(&ParamSet) -> f64) -> Matrix {
    let eps = DEFAULT_STEP;
    let mut out = Matrix::zeros(params.get(id).raw_dim());
    let cols = out.ncols();
    for idx in 0..out.len() {
        let (i, j) = (idx / cols, idx % cols);
        let orig = params.get(id)[[i, j]];
        params.get_mut(id)[[i, j]] = orig + eps;
        let plus = f(params);
        params.get_mut(id)[[i, j]] = orig - eps;
        let minus = f(params);
        params.get_mut(id)[[i, j]] = orig;
        out[[i, j]] = (plus - minus) / (2.0 * eps);
    }
    out
}

/// Largest entrywise `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    assert_eq!(analytic.dim(), numeric.dim(), "gradient shapes differ");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
