//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

pub mod fixmatch;

use dgwm::data::{generate, split, Setting, ShiftSpec, SplitPlan, TargetView, TrainingView};
use dgwm::model::ModelConfig;
use dgwm::tensor::Tensor;

/// Central differences of `f` with respect to every entry of every tensor.
pub fn central_diff(mut f: impl FnMut(&[Tensor]) -> f64, params: &[Tensor], eps: f64) -> Vec<Vec<f64>> {
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = vec![0.0; params[t].len()];
        for i in 0..params[t].len() {
            let base = params[t].data()[i];
            work[t].data_mut()[i] = base + eps;
            let up = f(&work);
            work[t].data_mut()[i] = base - eps;
            let down = f(&work);
            work[t].data_mut()[i] = base;
            grad[i] = (up - down) / (2.0 * eps);
        }
        out.push(grad);
    }
    out
}

/// Five-point fourth-order differences; for smooth `f` only.
pub fn five_point_diff(mut f: impl FnMut(&[Tensor]) -> f64, params: &[Tensor], eps: f64) -> Vec<Vec<f64>> {
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut grad = vec![0.0; params[t].len()];
        for i in 0..params[t].len() {
            let base = params[t].data()[i];
            let mut at = |k: f64| {
                work[t].data_mut()[i] = base + k * eps;
                f(&work)
            };
            let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
            work[t].data_mut()[i] = base;
            grad[i] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
        }
        out.push(grad);
    }
    out
}

/// `|a - b| / max(|a|, |b|, 1e-6)`, maximized over entries.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Softmax of one logit row, max-shifted.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// The style-shift benchmark: 3 sources plus target domain 3, 10 labels per
/// class.
pub fn benchmark(seed: u64) -> (TrainingView, TargetView) {
    let spec = ShiftSpec { seed, ..ShiftSpec::default() };
    let data = generate(&spec).unwrap();
    let plan = SplitPlan::holdout(4, 3, Setting::FewLabels { per_class: 10 }, seed);
    split(&data, &plan).unwrap()
}

pub fn benchmark_model() -> ModelConfig {
    let s = ShiftSpec::default();
    ModelConfig::new(s.input_dim, s.num_classes)
}
