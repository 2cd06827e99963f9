//! Training: per-domain mask construction, thresholded pseudo-labeling,
//! labeled and unlabeled losses, SGD updates and unmasked inference.

mod loss;
mod pseudo;
mod record;
mod step;
mod train;

pub use loss::{entmin_loss, labeled_loss, masked_logits, unlabeled_loss};
pub use pseudo::{pseudo_label, pseudo_label_from_logits, PseudoLabelResult};
pub use record::{DomainInfoRow, EpochRow, RunRecord, RunSummary, ALL_DOMAINS, CSV_HEADER};
pub use step::{
    build_step_loss, prepare_step, step_loss_value, train_step, DomainStepVars, PreparedDomain,
    StepMetrics, DomainStepMetrics, StepVars, Streams,
};
pub use train::{accuracy, predict, predict_batch, train, train_split, NoObserver, TrainObserver};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{AugmentParams, BatchSizes};
use crate::error::{Error, Result};
use crate::model::keyword_enum;
use crate::optim::SgdConfig;

/// What the unlabeled data contributes to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Thresholded pseudo-labels on weak views, cross-entropy on strong views.
    Fixmatch,
    /// Mean prediction entropy on weak views.
    Entmin,
    /// Labeled loss only.
    SupervisedOnly,
}

keyword_enum!(Baseline { Fixmatch => "fixmatch", Entmin => "entmin", SupervisedOnly => "supervised_only" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: BatchSizes,
    pub tau: f64,
    pub baseline: Baseline,
    pub entmin_weight: f64,
    /// Domain-guided weight modulation on or off.
    pub modulation: bool,
    pub seed: u64,
    pub lr_backbone: f64,
    /// Learning rate of the classifier and the mask generator.
    pub lr_head: f64,
    pub momentum: f64,
    /// One optimizer update per domain instead of one per step.
    pub update_per_domain: bool,
    pub augment: AugmentParams,
    /// Keep every step's domain vectors in the run record.
    pub record_domain_info: bool,
    /// Evaluate target accuracy at the end of every epoch.
    pub eval_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            steps_per_epoch: 50,
            batch: BatchSizes::default(),
            tau: 0.95,
            baseline: Baseline::Fixmatch,
            entmin_weight: 1.0,
            modulation: true,
            seed: 0,
            lr_backbone: 0.003,
            lr_head: 0.01,
            momentum: 0.9,
            update_per_domain: false,
            augment: AugmentParams::default(),
            record_domain_info: false,
            eval_target: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::param("steps_per_epoch must be positive"));
        }
        if self.batch.unlabeled == 0 {
            return Err(Error::param("unlabeled batch size must be positive"));
        }
        if !(self.entmin_weight >= 0.0 && self.entmin_weight.is_finite()) {
            return Err(Error::param("entmin_weight must be finite and >= 0"));
        }
        self.augment.validate()?;
        self.sgd().validate()
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr_backbone: self.lr_backbone,
            lr_classifier_and_mask: self.lr_head,
            total_epochs: self.epochs.max(1),
            momentum: self.momentum,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_bounds() {
        for (tau, ok) in [(0.95, true), (1.0, true), (0.0, false), (1.5, false), (f64::NAN, false)] {
            let cfg = TrainConfig { tau, ..TrainConfig::default() };
            assert_eq!(cfg.validate().is_ok(), ok, "tau {tau}");
        }
    }

    #[test]
    fn baseline_keywords() {
        assert_eq!("supervised-only".parse::<Baseline>().unwrap(), Baseline::SupervisedOnly);
        assert_eq!(Baseline::Entmin.to_string(), "entmin");
        assert!("meanteacher".parse::<Baseline>().is_err());
    }
}
