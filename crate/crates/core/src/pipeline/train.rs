use std::time::Instant;

use crate::data::{split, Augmenter, MultiDomainDataset, Sample, SplitPlan, TargetView, TrainingView};
use crate::error::{Error, Result};
use crate::model::{ModelBundle, ModelConfig};
use crate::optim::{cosine_lr, Sgd};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::record::{DomainInfoRow, EpochRow, RunRecord, ALL_DOMAINS};
use super::step::{prepare_step, train_step, PreparedDomain, StepMetrics, Streams};
use super::TrainConfig;

/// Hooks into the training loop. Observers see read-only state.
pub trait TrainObserver {
    fn on_step(&mut self, _epoch: usize, _step: usize, _prepared: &[PreparedDomain], _metrics: &StepMetrics) {}

    /// Called after each epoch with the current parameters; `epoch` is 1-based.
    fn on_epoch_end(&mut self, _epoch: usize, _bundle: &ModelBundle) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Default, Clone)]
struct DomainAcc {
    domain_id: usize,
    accepted: usize,
    correct: usize,
    candidates: usize,
    loss_labeled: f64,
    labeled_steps: usize,
    loss_unlabeled: f64,
    steps: usize,
}

impl DomainAcc {
    fn row(&self, epoch: usize, domain: String, target: Option<f64>, lrs: (f64, f64), wall: f64) -> EpochRow {
        EpochRow {
            epoch,
            domain,
            pl_accuracy: (self.accepted > 0).then(|| self.correct as f64 / self.accepted as f64),
            pl_utilization: if self.candidates == 0 { 0.0 } else { self.accepted as f64 / self.candidates as f64 },
            loss_labeled: (self.labeled_steps > 0).then(|| self.loss_labeled / self.labeled_steps as f64),
            loss_unlabeled: if self.steps == 0 { 0.0 } else { self.loss_unlabeled / self.steps as f64 },
            target_accuracy: target,
            lr_backbone: lrs.0,
            lr_head: lrs.1,
            wall_seconds: wall,
        }
    }
}

/// Run the full training loop on the source domains of `view`, evaluating
/// on `target` after each epoch.
pub fn train(
    view: &TrainingView,
    target: Option<&TargetView>,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelBundle, RunRecord)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.input_dim != view.input_dim || model_cfg.num_classes != view.num_classes {
        return Err(Error::dim(
            "train",
            format!(
                "model expects D={} C={}, data has D={} C={}",
                model_cfg.input_dim, model_cfg.num_classes, view.input_dim, view.num_classes
            ),
        ));
    }
    if view.sources.is_empty() {
        return Err(Error::param("training needs at least one source domain"));
    }
    let mut bundle = ModelBundle::init(model_cfg, view.sources.len(), &mut Rng::stream(cfg.seed, Streams::INIT))?;
    let augmenter = Augmenter::fit(view, cfg.augment)?;
    let mut streams = Streams::new(cfg.seed);
    let mut opt = Sgd::new(cfg.momentum, bundle.params().iter().map(|(_, _, t)| t.len()));
    let sgd = cfg.sgd();
    let mut record = RunRecord::new(cfg, model_cfg);

    for epoch in 0..cfg.epochs {
        let lrs = (
            cosine_lr(epoch, &sgd, cfg.lr_backbone)?,
            cosine_lr(epoch, &sgd, cfg.lr_head)?,
        );
        let mut acc: Vec<DomainAcc> = view
            .sources
            .iter()
            .map(|s| DomainAcc { domain_id: s.domain_id, ..DomainAcc::default() })
            .collect();
        let start = Instant::now();
        for step in 0..cfg.steps_per_epoch {
            let prepared = prepare_step(view, &augmenter, cfg, &bundle, &mut streams)?;
            let metrics = train_step(&mut bundle, &mut opt, &prepared, cfg, lrs)?;
            if !metrics.loss.is_finite() {
                return Err(Error::NonFinite { op: "training loss" });
            }
            record.step_losses.push(metrics.loss);
            for d in &metrics.domains {
                let a = &mut acc[d.domain_slot];
                a.accepted += d.accepted;
                a.correct += d.correct;
                a.candidates += d.candidates;
                if let Some(l) = d.loss_labeled {
                    a.loss_labeled += l;
                    a.labeled_steps += 1;
                }
                a.loss_unlabeled += d.loss_unlabeled;
                a.steps += 1;
                if cfg.record_domain_info {
                    if let Some(info) = &d.info {
                        record.domain_info.push(DomainInfoRow {
                            epoch: epoch + 1,
                            step: step + 1,
                            domain_id: d.domain_id,
                            info: info.clone(),
                        });
                    }
                }
            }
            observer.on_step(epoch + 1, step + 1, &prepared, &metrics);
        }
        let wall = start.elapsed().as_secs_f64();
        let target_acc = match (cfg.eval_target, target) {
            (true, Some(t)) => Some(accuracy(&bundle, &t.samples)?),
            _ => None,
        };
        let mut pooled = DomainAcc::default();
        for a in &acc {
            record.rows.push(a.row(epoch + 1, a.domain_id.to_string(), target_acc, lrs, wall));
            pooled.accepted += a.accepted;
            pooled.correct += a.correct;
            pooled.candidates += a.candidates;
            if a.labeled_steps > 0 {
                pooled.loss_labeled += a.loss_labeled / a.labeled_steps as f64;
                pooled.labeled_steps += 1;
            }
            if a.steps > 0 {
                pooled.loss_unlabeled += a.loss_unlabeled / a.steps as f64;
                pooled.steps += 1;
            }
        }
        record.rows.push(pooled.row(epoch + 1, ALL_DOMAINS.into(), target_acc, lrs, wall));
        observer.on_epoch_end(epoch + 1, &bundle)?;
    }
    Ok((bundle, record))
}

/// Split `dataset` by `plan` and train with no observer.
pub fn train_split(
    dataset: &MultiDomainDataset,
    plan: &SplitPlan,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(ModelBundle, RunRecord)> {
    let (view, target) = split(dataset, plan)?;
    train(&view, Some(&target), cfg, model_cfg, &mut NoObserver)
}

/// Class predictions for an `n × D` batch from the unmasked classifier.
pub fn predict_batch(bundle: &ModelBundle, x: &Tensor) -> Result<Vec<usize>> {
    let f = bundle.features(x)?;
    let logits = f.matmul(&bundle.inference_classifier().transpose()?)?;
    Ok(logits.argmax_rows())
}

pub fn predict(bundle: &ModelBundle, x: &[f64]) -> Result<usize> {
    Ok(predict_batch(bundle, &Tensor::row(x.to_vec()))?[0])
}

/// Fraction of `samples` classified correctly.
pub fn accuracy(bundle: &ModelBundle, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch("accuracy"));
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let preds = predict_batch(bundle, &Tensor::from_rows(&rows)?)?;
    let correct = preds.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    Ok(correct as f64 / samples.len() as f64)
}
