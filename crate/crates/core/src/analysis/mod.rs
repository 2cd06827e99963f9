//! Diagnostics of a trained model: feature partitions induced by the mask,
//! restricted pseudo-labels, the masked-gradient identity, threshold
//! sweeps, adding-domains studies, overhead timing and domain-vector export.
//!
//! Nothing here mutates model parameters.

mod export;
mod study;
mod sweep;
mod verify;

pub use export::{export_domain_info, read_domain_info, write_domain_info_csv};
pub use study::{
    adding_domains_study, overhead_percent, overhead_report, AddingDomainsStudy, OverheadReport,
    PrefixRun,
};
pub use sweep::{
    held_batches, mask_pair_for, pseudo_label_mask, threshold_sweep, AgreementObserver,
    AgreementRow, HeldBatch, SweepResult, SweepSeries, SweepVariant,
};
pub use verify::{
    check_step_gradients, degenerate_mask_suite, gradient_suite, identity_suite, low_rank_suite,
    run_verify_suite, small_config, CheckResult, StepGradReport, MIN_RELU_MARGIN, STEP_FD_EPS,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::gradcheck::{finite_diff_grad_5pt, max_relative_error, FIVE_POINT_EPS};
use crate::model::{MaskPair, ModelBundle};
use crate::pipeline::{pseudo_label, PseudoLabelResult};
use crate::tensor::{softmax, Tensor};

/// Split of the feature indices by the sign of `v_f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePartition {
    /// `v_f[j] >= 0`.
    pub j_plus: Vec<usize>,
    /// `v_f[j] < 0`.
    pub j_minus: Vec<usize>,
}

pub fn partition_features(v_f: &[f64]) -> FeaturePartition {
    let (j_plus, j_minus) = (0..v_f.len()).partition(|&j| v_f[j] >= 0.0);
    FeaturePartition { j_plus, j_minus }
}

/// Which feature set each class row keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// `J+` for classes with `v_cls > 0`, `J-` for `v_cls < 0`.
    BySign,
    /// The opposite sets; a control for [`Restriction::BySign`].
    Flipped,
}

/// 0/1 matrix selecting, per class row, the columns kept by `rule`. Rows with
/// `v_cls[c] = 0` keep every column.
pub fn restriction_matrix(v_cls: &[f64], v_f: &[f64], rule: Restriction) -> Result<Tensor> {
    let (c, d) = (v_cls.len(), v_f.len());
    let mut r = Tensor::zeros(&[c, d]);
    let data = r.data_mut();
    for (ci, &vc) in v_cls.iter().enumerate() {
        let want_plus = match rule {
            Restriction::BySign => vc > 0.0,
            Restriction::Flipped => vc < 0.0,
        };
        for (j, &vf) in v_f.iter().enumerate() {
            let keep = vc == 0.0 || (vf >= 0.0) == want_plus;
            data[ci * d + j] = if keep { 1.0 } else { 0.0 };
        }
    }
    Ok(r)
}

/// Pseudo-labels from `W ⊙ M_ss` with each class row restricted to the
/// feature set its `v_cls` sign prescribes.
pub fn restricted_pseudo_label(
    bundle: &ModelBundle,
    domain_slot: usize,
    weak_inputs: &Tensor,
    pair: &MaskPair,
    tau: f64,
    hidden: Option<&[usize]>,
    rule: Restriction,
) -> Result<PseudoLabelResult> {
    let r = restriction_matrix(pair.v_cls.data(), pair.v_f.data(), rule)?;
    if r.shape() != pair.mask_ss.shape() {
        return Err(Error::dim(
            "restricted_pseudo_label",
            format!("mask {:?} vs v_cls/v_f {:?}", pair.mask_ss.shape(), r.shape()),
        ));
    }
    let mut m = pair.mask_ss.clone();
    for (v, k) in m.data_mut().iter_mut().zip(r.data()) {
        *v *= k;
    }
    pseudo_label(bundle, domain_slot, weak_inputs, Some(&m), tau, hidden)
}

/// Agreement of two pseudo-label results on the same batch: points accepted
/// by both with equal labels, over the union of accepted points. An empty
/// union counts as full agreement.
pub fn pl_agreement(a: &PseudoLabelResult, b: &PseudoLabelResult) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut union, mut agree) = (0usize, 0usize);
    while i < a.accepted.len() || j < b.accepted.len() {
        let ai = a.accepted.get(i).copied().unwrap_or(usize::MAX);
        let bj = b.accepted.get(j).copied().unwrap_or(usize::MAX);
        union += 1;
        if ai == bj {
            if a.labels[i] == b.labels[j] {
                agree += 1;
            }
            i += 1;
            j += 1;
        } else if ai < bj {
            i += 1;
        } else {
            j += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        agree as f64 / union as f64
    }
}

/// Max pairwise relative discrepancies between three estimates of
/// `∂CE((W ⊙ M) f, y) / ∂W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientIdentity {
    pub backward_vs_closed: f64,
    pub backward_vs_fd: f64,
    pub closed_vs_fd: f64,
}

impl GradientIdentity {
    pub fn max(&self) -> f64 {
        self.backward_vs_closed.max(self.backward_vs_fd).max(self.closed_vs_fd)
    }
}

/// Gradient of the modulated cross-entropy w.r.t. `W` by reverse mode.
pub fn masked_ce_grad_backward(w: &Tensor, m: &Tensor, f_x: &[f64], target: usize) -> Result<Tensor> {
    let mut g = Graph::new();
    let wv = g.leaf(w.clone().with_grad(true))?;
    let mv = g.constant(m.clone())?;
    let fv = g.constant(Tensor::row(f_x.to_vec()))?;
    let wm = g.mul(wv, mv)?;
    let wt = g.transpose(wm)?;
    let z = g.matmul(fv, wt)?;
    let loss = g.cross_entropy(z, target)?;
    g.backward(loss)?;
    let grad = g.grad(wv).expect("leaf gradient after backward").to_vec();
    Tensor::new(w.shape().to_vec(), grad)
}

/// `(∇_z CE × fᵀ) ⊙ M` with `∇_z CE = softmax(z) - onehot(y)`.
pub fn masked_ce_grad_closed_form(w: &Tensor, m: &Tensor, f_x: &[f64], target: usize) -> Result<Tensor> {
    let (c, d) = w.dims2()?;
    if m.shape() != w.shape() || f_x.len() != d {
        return Err(Error::dim(
            "verify_gradient_identity",
            format!("W {:?}, M {:?}, f of length {}", w.shape(), m.shape(), f_x.len()),
        ));
    }
    if target >= c {
        return Err(Error::Index { what: "class target", index: target, len: c });
    }
    let z: Vec<f64> = (0..c)
        .map(|ci| (0..d).map(|j| w.data()[ci * d + j] * m.data()[ci * d + j] * f_x[j]).sum())
        .collect();
    let mut dz = softmax(&z);
    dz[target] -= 1.0;
    let mut out = Tensor::zeros(&[c, d]);
    for ci in 0..c {
        for j in 0..d {
            out.data_mut()[ci * d + j] = dz[ci] * f_x[j] * m.data()[ci * d + j];
        }
    }
    Ok(out)
}

/// Compare reverse mode, the closed form and central differences on one
/// example. `M` is a constant throughout.
pub fn verify_gradient_identity(w: &Tensor, m: &Tensor, f_x: &[f64], target: usize) -> Result<GradientIdentity> {
    let closed = masked_ce_grad_closed_form(w, m, f_x, target)?;
    let back = masked_ce_grad_backward(w, m, f_x, target)?;
    let fd = finite_diff_grad_5pt(
        |p| {
            let mut g = Graph::new();
            let wv = g.constant(p[0].clone())?;
            let mv = g.constant(m.clone())?;
            let fv = g.constant(Tensor::row(f_x.to_vec()))?;
            let wm = g.mul(wv, mv)?;
            let wt = g.transpose(wm)?;
            let z = g.matmul(fv, wt)?;
            let loss = g.cross_entropy(z, target)?;
            Ok(g.value(loss).item())
        },
        std::slice::from_ref(w),
        FIVE_POINT_EPS,
    )?;
    Ok(GradientIdentity {
        backward_vs_closed: max_relative_error(back.data(), closed.data()),
        backward_vs_fd: max_relative_error(back.data(), fd[0].data()),
        closed_vs_fd: max_relative_error(closed.data(), fd[0].data()),
    })
}

/// Largest absolute 2×2 minor of a matrix; zero up to rounding for rank ≤ 1.
pub fn max_abs_minor(a: &Tensor) -> Result<f64> {
    let (r, c) = a.dims2()?;
    let x = a.data();
    let mut best: f64 = 0.0;
    for i in 0..r {
        for k in i + 1..r {
            for j in 0..c {
                for l in j + 1..c {
                    let minor = x[i * c + j] * x[k * c + l] - x[i * c + l] * x[k * c + j];
                    best = best.max(minor.abs());
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn plr(accepted: Vec<usize>, labels: Vec<usize>) -> PseudoLabelResult {
        PseudoLabelResult {
            confidences: vec![0.99; accepted.len()],
            accepted,
            labels,
            num_candidates: 8,
            num_correct: 0,
            pl_accuracy: 0.0,
            utilization: 0.0,
        }
    }

    #[test]
    fn partition_examples() {
        let p = partition_features(&[0.3, -0.1, 0.0]);
        assert_eq!(p.j_plus, vec![0, 2]);
        assert_eq!(p.j_minus, vec![1]);
        assert!(partition_features(&[1.0, 2.0]).j_minus.is_empty());
        let q = partition_features(&[-0.3, 0.1, -0.0]);
        // -0.0 >= 0 holds, so the zero stays in J+
        assert_eq!(q.j_plus, vec![1, 2]);
        assert_eq!(q.j_minus, vec![0]);
    }

    #[test]
    fn agreement_examples() {
        let a = plr(vec![1, 3], vec![0, 2]);
        assert_eq!(pl_agreement(&a, &a), 1.0);
        assert_eq!(pl_agreement(&a, &plr(vec![0, 2], vec![0, 2])), 0.0);
        let b = plr(vec![1, 3, 5, 6], vec![0, 2, 1, 1]);
        assert_eq!(pl_agreement(&a, &b), 0.5);
        assert_eq!(pl_agreement(&b, &a), 0.5);
        assert_eq!(pl_agreement(&plr(vec![], vec![]), &plr(vec![], vec![])), 1.0);
        // same point, different label
        assert_eq!(pl_agreement(&plr(vec![2], vec![0]), &plr(vec![2], vec![1])), 0.0);
    }

    #[test]
    fn restriction_rows() {
        let r = restriction_matrix(&[1.0, -2.0, 0.0], &[0.5, -0.5], Restriction::BySign).unwrap();
        assert_eq!(r.data(), &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let f = restriction_matrix(&[1.0, -2.0, 0.0], &[0.5, -0.5], Restriction::Flipped).unwrap();
        assert_eq!(f.data(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn identity_on_random_instance() {
        let mut rng = Rng::new(5);
        let w = Tensor::new(vec![3, 8], (0..24).map(|_| rng.normal()).collect()).unwrap();
        let m = Tensor::new(vec![3, 8], (0..24).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
        let f: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let r = verify_gradient_identity(&w, &m, &f, 1).unwrap();
        assert!(r.backward_vs_closed < 1e-9, "{r:?}");
        assert!(r.backward_vs_fd < 1e-5, "{r:?}");
    }

    #[test]
    fn zero_mask_row_annihilates() {
        let mut rng = Rng::new(6);
        let w = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let mut m = Tensor::ones(&[3, 4]);
        m.data_mut()[4..8].iter_mut().for_each(|v| *v = 0.0);
        let f = [0.5, -1.0, 2.0, 0.1];
        let g = masked_ce_grad_backward(&w, &m, &f, 0).unwrap();
        assert!(g.data()[4..8].iter().all(|&v| v == 0.0));
        assert!(g.data()[..4].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn ones_mask_is_standard_gradient() {
        let mut rng = Rng::new(7);
        let w = Tensor::new(vec![2, 3], (0..6).map(|_| rng.normal()).collect()).unwrap();
        let f = [1.0, -0.5, 0.25];
        let g = masked_ce_grad_closed_form(&w, &Tensor::ones(&[2, 3]), &f, 1).unwrap();
        let z: Vec<f64> = (0..2).map(|c| (0..3).map(|j| w.data()[c * 3 + j] * f[j]).sum()).collect();
        let p = softmax(&z);
        for c in 0..2 {
            let dz = p[c] - if c == 1 { 1.0 } else { 0.0 };
            for j in 0..3 {
                assert!((g.data()[c * 3 + j] - dz * f[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let w = Tensor::ones(&[2, 3]);
        assert!(verify_gradient_identity(&w, &Tensor::ones(&[3, 2]), &[1.0; 3], 0).is_err());
        assert!(verify_gradient_identity(&w, &w, &[1.0; 2], 0).is_err());
    }

    #[test]
    fn rank_one_minors_vanish() {
        let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(max_abs_minor(&a).unwrap(), 0.0);
        let b = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(max_abs_minor(&b).unwrap(), 1.0);
    }
}
