//! Synthetic multi-domain classification problems, semi-supervised splits,
//! vector-space augmentations and minibatch sampling.

mod augment;
mod generate;
mod io;
mod split;

pub use augment::{Augmenter, AugmentParams};
pub use generate::generate;
pub use io::{export_dataset, import_dataset, read_dataset_csv, write_dataset_csv};
pub use split::{leave_one_domain_out, sample_step_batches, split, BatchSizes, Setting, SplitPlan};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::keyword_enum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Per-domain rotation and scaling of the whole input.
    Style,
    /// Per-domain offset on the nuisance coordinates.
    Background,
    /// Per-domain heavy-tailed noise on the class-relevant coordinates.
    Corruption,
}

keyword_enum!(ShiftKind { Style => "style", Background => "background", Corruption => "corruption" });

/// Description of a synthetic benchmark; the dataset is a pure function of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub shift_kind: ShiftKind,
    /// Source domains plus the target.
    pub num_domains: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class_per_domain: usize,
    pub shift_strength: f64,
    /// Spread of the class centers relative to the unit within-class noise.
    pub class_separation: f64,
    /// Optional relative class frequencies (imbalanced benchmarks).
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            shift_kind: ShiftKind::Style,
            num_domains: 4,
            num_classes: 5,
            input_dim: 20,
            samples_per_class_per_domain: 200,
            shift_strength: 2.0,
            class_separation: 1.0,
            class_weights: None,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(Error::param("need at least one source and one target domain"));
        }
        if self.num_classes < 2 {
            return Err(Error::param("need at least two classes"));
        }
        if self.input_dim < 2 {
            return Err(Error::param("input_dim must be >= 2"));
        }
        if self.samples_per_class_per_domain == 0 {
            return Err(Error::param("samples_per_class_per_domain must be positive"));
        }
        if !(self.shift_strength >= 0.0 && self.shift_strength.is_finite()) {
            return Err(Error::param("shift_strength must be finite and >= 0"));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::param("class_separation must be finite and > 0"));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_classes || w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::param(
                    "class_weights needs one positive weight per class",
                ));
            }
        }
        Ok(())
    }

    /// Samples of class `c` in every domain.
    pub fn class_count(&self, c: usize) -> usize {
        match &self.class_weights {
            None => self.samples_per_class_per_domain,
            Some(w) => {
                let max = w.iter().cloned().fold(0.0, f64::max);
                ((self.samples_per_class_per_domain as f64 * w[c] / max).round() as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDomainDataset {
    pub spec: ShiftSpec,
    pub domains: Vec<Domain>,
}

impl MultiDomainDataset {
    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }
}

/// Ground-truth labels of unlabeled points. Only diagnostics read these;
/// nothing in the loss path accepts this type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.0.get(i).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// One source domain as seen by training.
#[derive(Debug, Clone)]
pub struct SourceDomain {
    pub domain_id: usize,
    pub name: String,
    pub labeled: Vec<Sample>,
    /// Every point of the domain with its label stripped.
    pub unlabeled: Vec<Vec<f64>>,
    pub hidden: HiddenLabels,
}

#[derive(Debug, Clone)]
pub struct TrainingView {
    pub input_dim: usize,
    pub num_classes: usize,
    pub sources: Vec<SourceDomain>,
}

impl TrainingView {
    /// Keep only the first `n` source domains (adding-domains studies).
    pub fn prefix(&self, n: usize) -> Result<TrainingView> {
        if n == 0 || n > self.sources.len() {
            return Err(Error::param(format!(
                "prefix of {n} sources out of {}",
                self.sources.len()
            )));
        }
        Ok(TrainingView {
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            sources: self.sources[..n].to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TargetView {
    pub domain_id: usize,
    pub name: String,
    pub samples: Vec<Sample>,
}

/// One domain's minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBatch {
    /// Position of the domain among the training sources.
    pub domain_slot: usize,
    pub domain_id: usize,
    pub labeled: Vec<Sample>,
    /// Draws from the label-stripped domain pool; optionally preceded by the
    /// labeled inputs of this batch with labels dropped.
    pub unlabeled: Vec<Vec<f64>>,
}

/// A sampled minibatch for one domain together with the diagnostics-only
/// ground truth of its unlabeled part.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub batch: DomainBatch,
    pub hidden: HiddenLabels,
}
