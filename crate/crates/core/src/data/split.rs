use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{
    DomainBatch, HiddenLabels, MultiDomainDataset, Sample, SampledBatch, SourceDomain, TargetView,
    TrainingView,
};

/// How labels are distributed over the source domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Setting {
    /// `per_class` labeled points of every class in every source domain.
    FewLabels { per_class: usize },
    /// One source domain fully labeled, the others fully unlabeled.
    OneLabeledDomain { labeled_domain: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub setting: Setting,
    /// Source domain indices, in training order.
    pub sources: Vec<usize>,
    pub target: usize,
    /// Seed of the labeled-subset draw.
    pub seed: u64,
}

impl SplitPlan {
    /// All domains but `target` become sources.
    pub fn holdout(num_domains: usize, target: usize, setting: Setting, seed: u64) -> Self {
        Self {
            setting,
            sources: (0..num_domains).filter(|&k| k != target).collect(),
            target,
            seed,
        }
    }

    pub fn validate(&self, num_domains: usize) -> Result<()> {
        if self.target >= num_domains {
            return Err(Error::Index { what: "target domain", index: self.target, len: num_domains });
        }
        if self.sources.is_empty() {
            return Err(Error::param("split plan has no source domains"));
        }
        for (i, &k) in self.sources.iter().enumerate() {
            if k >= num_domains {
                return Err(Error::Index { what: "source domain", index: k, len: num_domains });
            }
            if k == self.target {
                return Err(Error::param(format!("domain {k} is both source and target")));
            }
            if self.sources[..i].contains(&k) {
                return Err(Error::param(format!("source domain {k} listed twice")));
            }
        }
        match self.setting {
            Setting::FewLabels { per_class: 0 } => {
                Err(Error::param("labels per class must be positive"))
            }
            Setting::OneLabeledDomain { labeled_domain } if !self.sources.contains(&labeled_domain) => {
                Err(Error::param(format!("labeled domain {labeled_domain} is not a source")))
            }
            _ => Ok(()),
        }
    }
}

/// Split a dataset into the training view and the held-out target.
pub fn split(dataset: &MultiDomainDataset, plan: &SplitPlan) -> Result<(TrainingView, TargetView)> {
    plan.validate(dataset.num_domains())?;
    let c = dataset.num_classes();
    let mut rng = Rng::stream(plan.seed, 0x5b11);
    let mut sources = Vec::with_capacity(plan.sources.len());
    for &k in &plan.sources {
        let domain = &dataset.domains[k];
        let labeled = match plan.setting {
            Setting::FewLabels { per_class } => {
                if per_class * c > domain.samples.len() {
                    return Err(Error::param(format!(
                        "{per_class} labels x {c} classes exceeds the {} points of domain {k}",
                        domain.samples.len()
                    )));
                }
                let mut picked = Vec::with_capacity(per_class * c);
                for class in 0..c {
                    let mut idx: Vec<usize> = (0..domain.samples.len())
                        .filter(|&i| domain.samples[i].label == class)
                        .collect();
                    if idx.len() < per_class {
                        return Err(Error::param(format!(
                            "domain {k} has {} points of class {class}, need {per_class}",
                            idx.len()
                        )));
                    }
                    rng.shuffle(&mut idx);
                    idx.truncate(per_class);
                    picked.extend(idx);
                }
                picked.sort_unstable();
                picked.into_iter().map(|i| domain.samples[i].clone()).collect()
            }
            Setting::OneLabeledDomain { labeled_domain } if labeled_domain == k => {
                domain.samples.clone()
            }
            Setting::OneLabeledDomain { .. } => Vec::new(),
        };
        sources.push(SourceDomain {
            domain_id: k,
            name: domain.name.clone(),
            labeled,
            unlabeled: domain.samples.iter().map(|s| s.x.clone()).collect(),
            hidden: HiddenLabels::new(domain.samples.iter().map(|s| s.label).collect()),
        });
    }
    let target = &dataset.domains[plan.target];
    Ok((
        TrainingView {
            input_dim: dataset.input_dim(),
            num_classes: c,
            sources,
        },
        TargetView {
            domain_id: plan.target,
            name: target.name.clone(),
            samples: target.samples.clone(),
        },
    ))
}

/// One plan per choice of held-out domain.
pub fn leave_one_domain_out(
    dataset: &MultiDomainDataset,
    setting: Setting,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    let n = dataset.num_domains();
    if n < 2 {
        return Err(Error::param("leave-one-domain-out needs at least two domains"));
    }
    let plans: Vec<SplitPlan> = (0..n)
        .map(|t| {
            let mut plan = SplitPlan::holdout(n, t, setting, seed);
            if let Setting::OneLabeledDomain { .. } = setting {
                plan.setting = Setting::OneLabeledDomain { labeled_domain: plan.sources[0] };
            }
            plan
        })
        .collect();
    for plan in &plans {
        plan.validate(n)?;
    }
    Ok(plans)
}

/// Per-domain batch quotas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    /// Prepend the batch's labeled inputs, labels dropped, to the unlabeled part.
    pub include_labeled_in_unlabeled: bool,
}

impl Default for BatchSizes {
    fn default() -> Self {
        Self { labeled: 16, unlabeled: 16, include_labeled_in_unlabeled: false }
    }
}

/// `k` indices into a pool of `n`: without replacement when the pool is large
/// enough, with replacement otherwise.
fn draw_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    if n >= k {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + rng.index(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    } else {
        (0..k).map(|_| rng.index(n)).collect()
    }
}

/// Draw one minibatch per source domain.
pub fn sample_step_batches(
    view: &TrainingView,
    sizes: BatchSizes,
    rng: &mut Rng,
) -> Result<Vec<SampledBatch>> {
    if view.sources.is_empty() {
        return Err(Error::param("training view has no source domains"));
    }
    if sizes.unlabeled == 0 {
        return Err(Error::param("unlabeled batch size must be positive"));
    }
    view.sources
        .iter()
        .enumerate()
        .map(|(slot, src)| {
            if src.unlabeled.is_empty() {
                return Err(Error::param(format!("source domain {} is empty", src.domain_id)));
            }
            let labeled: Vec<Sample> = if src.labeled.is_empty() {
                Vec::new()
            } else {
                draw_indices(rng, src.labeled.len(), sizes.labeled)
                    .into_iter()
                    .map(|i| src.labeled[i].clone())
                    .collect()
            };
            let picks = draw_indices(rng, src.unlabeled.len(), sizes.unlabeled);
            let mut unlabeled = Vec::with_capacity(labeled.len() + picks.len());
            let mut hidden = Vec::with_capacity(labeled.len() + picks.len());
            if sizes.include_labeled_in_unlabeled {
                for s in &labeled {
                    unlabeled.push(s.x.clone());
                    hidden.push(s.label);
                }
            }
            for i in picks {
                unlabeled.push(src.unlabeled[i].clone());
                hidden.push(src.hidden.as_slice()[i]);
            }
            Ok(SampledBatch {
                batch: DomainBatch {
                    domain_slot: slot,
                    domain_id: src.domain_id,
                    labeled,
                    unlabeled,
                },
                hidden: HiddenLabels::new(hidden),
            })
        })
        .collect()
}
