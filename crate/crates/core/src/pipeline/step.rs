//! One training step, split into a sampling phase ([`prepare_step`]) that
//! consumes all randomness and a deterministic loss phase
//! ([`build_step_loss`]) that can be re-evaluated for gradient checks.

use crate::autodiff::{Graph, Var};
use crate::data::{sample_step_batches, Augmenter, HiddenLabels, TrainingView};
use crate::error::{Error, Result};
use crate::model::{draw_latent_noise, make_mask_pair_with, BoundModel, MaskPairVars, ModelBundle, ParamGroup};
use crate::optim::Sgd;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::loss::{entmin_loss, labeled_loss, masked_logits, unlabeled_loss};
use super::pseudo::{pseudo_label_from_logits, PseudoLabelResult};
use super::{Baseline, TrainConfig};

/// Independent random streams of a run. Keeping them apart means a
/// modulated and an unmodulated run with the same seed see identical
/// batches and augmentations.
#[derive(Debug, Clone)]
pub struct Streams {
    pub batch: Rng,
    pub augment: Rng,
    pub noise: Rng,
}

impl Streams {
    pub const INIT: u64 = 1;

    pub fn new(seed: u64) -> Self {
        Self {
            batch: Rng::stream(seed, 2),
            augment: Rng::stream(seed, 3),
            noise: Rng::stream(seed, 4),
        }
    }
}

/// Everything random about one domain's share of a step, drawn up front.
#[derive(Debug, Clone)]
pub struct PreparedDomain {
    pub domain_slot: usize,
    pub domain_id: usize,
    pub labels: Vec<usize>,
    /// Weak views of the labeled inputs; `None` for unlabeled-only domains.
    pub labeled_weak: Option<Tensor>,
    /// Unaugmented unlabeled inputs, used for the domain vector.
    pub unlabeled_raw: Tensor,
    pub unlabeled_weak: Tensor,
    pub unlabeled_strong: Tensor,
    pub hidden: HiddenLabels,
    /// Learning-branch latent noise (modulated runs only).
    pub noise: Option<Tensor>,
}

/// Sample batches, augment them and draw the mask noise.
pub fn prepare_step(
    view: &TrainingView,
    augmenter: &Augmenter,
    cfg: &TrainConfig,
    bundle: &ModelBundle,
    streams: &mut Streams,
) -> Result<Vec<PreparedDomain>> {
    let batches = sample_step_batches(view, cfg.batch, &mut streams.batch)?;
    let mc = &bundle.config;
    batches
        .into_iter()
        .map(|sb| {
            let b = sb.batch;
            let aug = &mut streams.augment;
            let labeled_weak = if b.labeled.is_empty() {
                None
            } else {
                let rows: Vec<Vec<f64>> = b.labeled.iter().map(|s| augmenter.weak(&s.x, aug)).collect();
                Some(Tensor::from_rows(&rows)?)
            };
            let weak = augmenter.weak_rows(&b.unlabeled, aug);
            let strong = augmenter.strong_rows(&b.unlabeled, aug);
            let noise = if cfg.modulation {
                draw_latent_noise(&mut streams.noise, mc.latent(), mc.epsilon_sq, mc.noise_mode)?
            } else {
                None
            };
            Ok(PreparedDomain {
                domain_slot: b.domain_slot,
                domain_id: b.domain_id,
                labels: b.labeled.iter().map(|s| s.label).collect(),
                labeled_weak,
                unlabeled_raw: Tensor::from_rows(&b.unlabeled)?,
                unlabeled_weak: Tensor::from_rows(&weak)?,
                unlabeled_strong: Tensor::from_rows(&strong)?,
                hidden: sb.hidden,
                noise,
            })
        })
        .collect()
}

/// Graph nodes of one domain's contribution.
#[derive(Debug, Clone)]
pub struct DomainStepVars {
    pub pl: PseudoLabelResult,
    pub loss_labeled: Option<Var>,
    pub loss_unlabeled: Option<Var>,
    pub masks: Option<MaskPairVars>,
}

#[derive(Debug, Clone)]
pub struct StepVars {
    /// Sum of all domain losses; `None` when every term is empty.
    pub total: Option<Var>,
    pub domains: Vec<DomainStepVars>,
}

fn add_opt(g: &mut Graph, acc: Option<Var>, v: Option<Var>) -> Result<Option<Var>> {
    Ok(match (acc, v) {
        (Some(a), Some(b)) => Some(g.add(a, b)?),
        (a, b) => a.or(b),
    })
}

/// Build the summed step loss on `model`.
///
/// With `frozen`, those pseudo-labels replace the ones the current
/// parameters would produce; gradient checks use this to keep the accepted
/// set fixed while parameters are perturbed.
pub fn build_step_loss(
    g: &mut Graph,
    model: &BoundModel,
    prepared: &[PreparedDomain],
    cfg: &TrainConfig,
    frozen: Option<&[PseudoLabelResult]>,
) -> Result<StepVars> {
    if prepared.is_empty() {
        return Err(Error::param("a training step needs at least one domain"));
    }
    if let Some(f) = frozen {
        if f.len() != prepared.len() {
            return Err(Error::dim("build_step_loss", format!("{} frozen results for {} domains", f.len(), prepared.len())));
        }
    }
    let mut total = None;
    let mut domains = Vec::with_capacity(prepared.len());
    for (k, p) in prepared.iter().enumerate() {
        let slot = p.domain_slot;
        let masks = if cfg.modulation {
            let raw = g.constant(p.unlabeled_raw.clone())?;
            let f_raw = model.features(g, raw)?;
            Some(make_mask_pair_with(g, model, f_raw, p.noise.as_ref(), &model.config)?)
        } else {
            None
        };
        let m_ss = masks.map(|m| m.ss.mask);
        let m_lrn = masks.map(|m| m.lrn.mask);

        let need_weak = frozen.is_none() || cfg.baseline == Baseline::Entmin;
        let f_weak = if need_weak {
            let xw = g.constant(p.unlabeled_weak.clone())?;
            Some(model.features(g, xw)?)
        } else {
            None
        };
        let pl = match frozen {
            Some(f) => f[k].clone(),
            None => {
                let fw = f_weak.expect("weak features are built when pseudo-labels are not frozen");
                let ss_logits = masked_logits(g, model, slot, fw, m_ss)?;
                let logits = g.value(ss_logits).clone();
                pseudo_label_from_logits(&logits, cfg.tau, Some(p.hidden.as_slice()))?
            }
        };

        let loss_labeled = match &p.labeled_weak {
            Some(x) => {
                let xl = g.constant(x.clone())?;
                let fl = model.features(g, xl)?;
                Some(labeled_loss(g, model, slot, fl, &p.labels, m_lrn)?)
            }
            None => None,
        };
        let loss_unlabeled = match cfg.baseline {
            Baseline::Fixmatch => unlabeled_loss(g, model, slot, &p.unlabeled_strong, &pl, m_lrn)?,
            Baseline::Entmin => {
                let fw = f_weak.expect("weak features are built for entmin");
                let e = entmin_loss(g, model, slot, fw, m_lrn)?;
                Some(if cfg.entmin_weight == 1.0 { e } else { g.scale(e, cfg.entmin_weight)? })
            }
            Baseline::SupervisedOnly => None,
        };
        let domain_total = add_opt(g, loss_labeled, loss_unlabeled)?;
        total = add_opt(g, total, domain_total)?;
        domains.push(DomainStepVars {
            pl,
            loss_labeled,
            loss_unlabeled,
            masks,
        });
    }
    Ok(StepVars { total, domains })
}

/// Step loss as a plain number with parameters entering as constants.
pub fn step_loss_value(
    bundle: &ModelBundle,
    prepared: &[PreparedDomain],
    cfg: &TrainConfig,
    frozen: Option<&[PseudoLabelResult]>,
) -> Result<f64> {
    let mut g = Graph::new();
    let m = bundle.bind(&mut g, false)?;
    let vars = build_step_loss(&mut g, &m, prepared, cfg, frozen)?;
    Ok(vars.total.map_or(0.0, |v| g.value(v).item()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainStepMetrics {
    pub domain_slot: usize,
    pub domain_id: usize,
    pub accepted: usize,
    pub correct: usize,
    pub candidates: usize,
    pub loss_labeled: Option<f64>,
    /// 0 when the unlabeled term is empty.
    pub loss_unlabeled: f64,
    /// Domain vector `I` of this step (modulated runs only).
    pub info: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// Summed loss that was differentiated.
    pub loss: f64,
    pub domains: Vec<DomainStepMetrics>,
}

/// Forward, backward and SGD update for one step. `lrs` is
/// `(backbone, head)`.
pub fn train_step(
    bundle: &mut ModelBundle,
    opt: &mut Sgd,
    prepared: &[PreparedDomain],
    cfg: &TrainConfig,
    lrs: (f64, f64),
) -> Result<StepMetrics> {
    if prepared.is_empty() {
        return Err(Error::param("a training step needs at least one domain"));
    }
    if cfg.update_per_domain {
        let mut out = StepMetrics { loss: 0.0, domains: Vec::new() };
        for p in prepared {
            let m = update(bundle, opt, std::slice::from_ref(p), cfg, lrs)?;
            out.loss += m.loss;
            out.domains.extend(m.domains);
        }
        Ok(out)
    } else {
        update(bundle, opt, prepared, cfg, lrs)
    }
}

fn update(
    bundle: &mut ModelBundle,
    opt: &mut Sgd,
    prepared: &[PreparedDomain],
    cfg: &TrainConfig,
    (lr_backbone, lr_head): (f64, f64),
) -> Result<StepMetrics> {
    let mut g = Graph::new();
    let model = bundle.bind(&mut g, true)?;
    let vars = build_step_loss(&mut g, &model, prepared, cfg, None)?;
    let loss = match vars.total {
        Some(t) => {
            g.backward(t)?;
            g.value(t).item()
        }
        None => 0.0,
    };
    let grads: Vec<Vec<f64>> = if vars.total.is_some() {
        model.grads(&g)
    } else {
        model.leaves.iter().map(|&v| vec![0.0; g.value(v).len()]).collect()
    };
    let groups: Vec<ParamGroup> = bundle.params().into_iter().map(|(_, grp, _)| grp).collect();
    for (i, (p, gr)) in bundle.params_mut().into_iter().zip(&grads).enumerate() {
        let lr = match groups[i] {
            ParamGroup::Backbone => lr_backbone,
            ParamGroup::Head => lr_head,
        };
        opt.step(i, p.data_mut(), gr, lr)?;
    }
    let domains = prepared
        .iter()
        .zip(&vars.domains)
        .map(|(p, d)| {
            Ok(DomainStepMetrics {
                domain_slot: p.domain_slot,
                domain_id: p.domain_id,
                accepted: d.pl.accepted.len(),
                correct: d.pl.num_correct,
                candidates: d.pl.num_candidates,
                loss_labeled: d.loss_labeled.map(|v| g.value(v).item()),
                loss_unlabeled: d.loss_unlabeled.map_or(0.0, |v| g.value(v).item()),
                info: d.masks.map(|m| g.value(m.info).data().to_vec()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StepMetrics { loss, domains })
}
