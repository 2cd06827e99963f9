//! Domain information from a batch of features: column mean, or
//! eigenvector summaries of the feature covariance.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Aggregation;

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const SIGN_EPS: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix. `vectors[i]` pairs with
/// `values[i]`; sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations on a symmetric `n × n` matrix (row-major).
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<Eigen> {
    if a.len() != n * n {
        return Err(Error::dim("symmetric_eigen", format!("{} values for n = {n}", a.len())));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&m) < JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + j]).collect();
            fix_sign(&mut col);
            col
        })
        .collect();
    Ok(Eigen { values, vectors })
}

/// Make the first component with magnitude above `1e-12` positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Population covariance (`1/n`) of the rows of an `n × d` matrix.
fn covariance(x: &Tensor) -> Result<(Vec<f64>, usize)> {
    let (n, d) = x.dims2()?;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row_slice(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = x.row_slice(i);
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += da * (r[b] - mean[b]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    Ok((cov, d))
}

/// Aggregate feature rows into a length-d domain vector, on plain values.
pub fn aggregate_values(features: &Tensor, method: Aggregation) -> Result<Tensor> {
    let (n, d) = features.dims2()?;
    if n == 0 {
        return Err(Error::EmptyBatch("aggregate_domain_info"));
    }
    let out = match method {
        Aggregation::Mean => {
            let mut m = vec![0.0; d];
            for i in 0..n {
                for (a, v) in m.iter_mut().zip(features.row_slice(i)) {
                    *a += v;
                }
            }
            m.iter_mut().for_each(|a| *a /= n as f64);
            m
        }
        Aggregation::PrincipalEig => {
            let (cov, d) = covariance(features)?;
            symmetric_eigen(&cov, d)?.vectors.swap_remove(0)
        }
        Aggregation::MeanEig => {
            let (cov, d) = covariance(features)?;
            let eig = symmetric_eigen(&cov, d)?;
            let mut m = vec![0.0; d];
            for v in &eig.vectors {
                for (a, x) in m.iter_mut().zip(v) {
                    *a += x;
                }
            }
            m.iter_mut().for_each(|a| *a /= d as f64);
            m
        }
    };
    Ok(Tensor::row(out))
}

/// Graph version: the mean stays differentiable; eigenvector summaries are
/// computed on values and enter as constants.
pub fn aggregate_domain_info(g: &mut Graph, features: Var, method: Aggregation) -> Result<Var> {
    if g.value(features).dims2()?.0 == 0 {
        return Err(Error::EmptyBatch("aggregate_domain_info"));
    }
    match method {
        Aggregation::Mean => g.mean_rows(features),
        _ => {
            let v = aggregate_values(g.value(features), method)?;
            g.constant(v)
        }
    }
}
