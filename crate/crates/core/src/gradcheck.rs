//! Central-difference gradient estimates, the independent oracle for every
//! backward rule in the crate.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Step for [`finite_diff_grad_5pt`] on smooth functions.
pub const FIVE_POINT_EPS: f64 = 1e-3;

/// Denominator floor for [`relative_error`]; below this magnitude the
/// comparison is effectively absolute.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Largest [`relative_error`] over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient buffers differ in length");
    a.iter()
        .zip(b)
        .map(|(x, y)| relative_error(*x, *y))
        .fold(0.0, f64::max)
}

/// `(f(p + eps·e_i) - f(p - eps·e_i)) / (2·eps)` for every coordinate of every
/// parameter tensor.
pub fn finite_diff_grad<F>(mut f: F, params: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = Tensor::zeros(params[t].shape());
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            work[t].data_mut()[i] = orig + eps;
            let up = f(&work)?;
            work[t].data_mut()[i] = orig - eps;
            let down = f(&work)?;
            work[t].data_mut()[i] = orig;
            grad.data_mut()[i] = (up - down) / (2.0 * eps);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Fourth-order five-point stencil
/// `(-f(p+2h) + 8f(p+h) - 8f(p-h) + f(p-2h)) / (12h)`. Its truncation error
/// is small enough to use a step where rounding in `f` no longer dominates.
pub fn finite_diff_grad_5pt<F>(mut f: F, params: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = Tensor::zeros(params[t].shape());
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            let mut at = |k: f64| -> Result<f64> {
                work[t].data_mut()[i] = orig + k * eps;
                f(&work)
            };
            let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
            work[t].data_mut()[i] = orig;
            grad.data_mut()[i] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
        }
        out.push(grad);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid_scalar;

    #[test]
    fn square_at_three() {
        let p = Tensor::scalar(3.0);
        let g = finite_diff_grad(|ts| Ok(ts[0].item().powi(2)), &[p], DEFAULT_EPS).unwrap();
        assert!((g[0].item() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_sum_at_zero() {
        let p = Tensor::zeros(&[1, 4]);
        let g = finite_diff_grad(
            |ts| Ok(ts[0].data().iter().map(|&x| sigmoid_scalar(x)).sum()),
            &[p],
            DEFAULT_EPS,
        )
        .unwrap();
        for v in g[0].data() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn five_point_is_exact_on_quartics() {
        let p = Tensor::row(vec![0.7, -1.3]);
        let g = finite_diff_grad_5pt(|ts| Ok(ts[0].data().iter().map(|x| x.powi(4)).sum()), &[p], 0.1).unwrap();
        assert!((g[0].data()[0] - 4.0 * 0.7f64.powi(3)).abs() < 1e-12);
        assert!((g[0].data()[1] - 4.0 * (-1.3f64).powi(3)).abs() < 1e-12);
    }
}
