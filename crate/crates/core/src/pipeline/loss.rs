use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::{modulate, BoundModel};
use crate::tensor::Tensor;

use super::PseudoLabelResult;

/// `F · (W ⊙ M)ᵀ`, or `F · Wᵀ` without a mask.
pub fn masked_logits(
    g: &mut Graph,
    model: &BoundModel,
    domain_slot: usize,
    features: Var,
    mask: Option<Var>,
) -> Result<Var> {
    let w = model.classifier_for(domain_slot);
    let w = match mask {
        Some(m) => modulate(g, w, m)?,
        None => w,
    };
    model.logits(g, features, w)
}

/// Mean cross-entropy of the labeled features.
pub fn labeled_loss(
    g: &mut Graph,
    model: &BoundModel,
    domain_slot: usize,
    features: Var,
    labels: &[usize],
    mask: Option<Var>,
) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::EmptyBatch("labeled_loss"));
    }
    let z = masked_logits(g, model, domain_slot, features, mask)?;
    g.cross_entropy_mean(z, labels)
}

/// Mean cross-entropy of the accepted strong views against their
/// pseudo-labels. `None` stands for the exact zero loss of an empty
/// acceptance set.
pub fn unlabeled_loss(
    g: &mut Graph,
    model: &BoundModel,
    domain_slot: usize,
    strong_inputs: &Tensor,
    plr: &PseudoLabelResult,
    mask: Option<Var>,
) -> Result<Option<Var>> {
    if plr.accepted.is_empty() {
        return Ok(None);
    }
    let (n, _) = strong_inputs.dims2()?;
    if plr.accepted.len() != plr.labels.len() {
        return Err(Error::Contract("accepted indices and labels differ in length".into()));
    }
    let rows = plr
        .accepted
        .iter()
        .map(|&i| {
            if i < n {
                Ok(strong_inputs.row_slice(i))
            } else {
                Err(Error::Contract(format!("accepted index {i} outside a batch of {n}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let x = g.constant(Tensor::from_rows(&rows)?)?;
    let f = model.features(g, x)?;
    let z = masked_logits(g, model, domain_slot, f, mask)?;
    Ok(Some(g.cross_entropy_mean(z, &plr.labels)?))
}

/// Mean prediction entropy of the unlabeled features.
pub fn entmin_loss(
    g: &mut Graph,
    model: &BoundModel,
    domain_slot: usize,
    features: Var,
    mask: Option<Var>,
) -> Result<Var> {
    let z = masked_logits(g, model, domain_slot, features, mask)?;
    g.entropy_mean(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBundle, ModelConfig};
    use crate::rng::Rng;
    use crate::tensor::log_sum_exp;

    fn setup(c: usize) -> (Graph, BoundModel, ModelBundle) {
        let mut cfg = ModelConfig::new(4, c);
        cfg.feature_dim = 8;
        cfg.hidden = vec![6];
        let b = ModelBundle::init(&cfg, 1, &mut Rng::new(2)).unwrap();
        let mut g = Graph::new();
        let m = b.bind(&mut g, true).unwrap();
        (g, m, b)
    }

    fn ce(row: &[f64], t: usize) -> f64 {
        log_sum_exp(row) - row[t]
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let (mut g, mut m, _) = setup(4);
        m.classifiers[0] = g.constant(Tensor::zeros(&[4, 8])).unwrap();
        let f = g.constant(Tensor::row(vec![1.0; 8])).unwrap();
        let l = labeled_loss(&mut g, &m, 0, f, &[2], None).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
        let e = entmin_loss(&mut g, &m, 0, f, None).unwrap();
        assert!((g.value(e).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn labeled_loss_is_mean_of_rows() {
        let (mut g, m, _) = setup(3);
        let mut rng = Rng::new(4);
        let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..8).map(|_| rng.normal()).collect()).collect();
        let f = g.constant(Tensor::from_rows(&rows).unwrap()).unwrap();
        let l = labeled_loss(&mut g, &m, 0, f, &[0, 2], None).unwrap();
        let z = masked_logits(&mut g, &m, 0, f, None).unwrap();
        let zv = g.value(z).clone();
        let expect = 0.5 * (ce(zv.row_slice(0), 0) + ce(zv.row_slice(1), 2));
        assert!((g.value(l).item() - expect).abs() < 1e-12);

        let dup = g.constant(Tensor::from_rows(&[rows[0].clone(), rows[0].clone()]).unwrap()).unwrap();
        let single = g.constant(Tensor::from_rows(&[rows[0].clone()]).unwrap()).unwrap();
        let a = labeled_loss(&mut g, &m, 0, dup, &[1, 1], None).unwrap();
        let b = labeled_loss(&mut g, &m, 0, single, &[1], None).unwrap();
        assert_eq!(g.value(a).item(), g.value(b).item());
        assert!(matches!(labeled_loss(&mut g, &m, 0, single, &[], None), Err(Error::EmptyBatch(_))));
    }

    fn plr(accepted: Vec<usize>, labels: Vec<usize>, n: usize) -> PseudoLabelResult {
        PseudoLabelResult {
            confidences: vec![1.0; accepted.len()],
            accepted,
            labels,
            num_candidates: n,
            num_correct: 0,
            pl_accuracy: 0.0,
            utilization: 0.0,
        }
    }

    #[test]
    fn unlabeled_loss_cases() {
        let (mut g, m, b) = setup(3);
        let mut rng = Rng::new(9);
        let x = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        assert!(unlabeled_loss(&mut g, &m, 0, &x, &plr(vec![], vec![], 3), None).unwrap().is_none());

        let l = unlabeled_loss(&mut g, &m, 0, &x, &plr(vec![0, 2], vec![1, 0], 3), None)
            .unwrap()
            .unwrap();
        let f = b.features(&x).unwrap();
        let z = f.matmul(&b.classifiers[0].transpose().unwrap()).unwrap();
        let expect = 0.5 * (ce(z.row_slice(0), 1) + ce(z.row_slice(2), 0));
        assert!((g.value(l).item() - expect).abs() < 1e-12);

        assert!(matches!(
            unlabeled_loss(&mut g, &m, 0, &x, &plr(vec![5], vec![0], 3), None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn confident_correct_limit() {
        let (mut g, mut m, _) = setup(3);
        let mut w = Tensor::zeros(&[3, 8]);
        w.data_mut()[..8].iter_mut().for_each(|v| *v = 100.0);
        m.classifiers[0] = g.constant(w).unwrap();
        let f = g.constant(Tensor::row(vec![1.0; 8])).unwrap();
        let l = labeled_loss(&mut g, &m, 0, f, &[0], None).unwrap();
        assert!(g.value(l).item() < 1e-12);
        let e = entmin_loss(&mut g, &m, 0, f, None).unwrap();
        assert!(g.value(e).item() < 1e-12);
    }
}
