use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{Augmenter, TrainingView};
use crate::error::{Error, Result};
use crate::model::{make_mask_pair_with, MaskPair, ModelBundle};
use crate::pipeline::{masked_logits, pseudo_label, pseudo_label_from_logits, TrainObserver};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{pl_agreement, restricted_pseudo_label, Restriction};

/// A fixed unlabeled batch of one source domain, kept for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldBatch {
    pub domain_slot: usize,
    pub domain_id: usize,
    /// Unaugmented inputs; the domain vector is computed from these.
    pub raw: Tensor,
    /// Weak views of `raw`.
    pub weak: Tensor,
    pub hidden: Vec<usize>,
}

/// `per_domain` batches of `batch_size` unlabeled points from every source
/// domain, drawn without replacement within a batch where possible.
pub fn held_batches(
    view: &TrainingView,
    augmenter: &Augmenter,
    per_domain: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<HeldBatch>> {
    if batch_size == 0 {
        return Err(Error::param("held batch size must be positive"));
    }
    let mut rng = Rng::stream(seed, 0x4e1d);
    let mut out = Vec::with_capacity(per_domain * view.sources.len());
    for (slot, s) in view.sources.iter().enumerate() {
        let n = s.unlabeled.len();
        if n == 0 {
            return Err(Error::EmptyBatch("held_batches"));
        }
        for _ in 0..per_domain {
            let idx: Vec<usize> = if n >= batch_size {
                let mut all: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut all);
                all.truncate(batch_size);
                all
            } else {
                (0..batch_size).map(|_| rng.index(n)).collect()
            };
            let raw: Vec<&Vec<f64>> = idx.iter().map(|&i| &s.unlabeled[i]).collect();
            let weak = augmenter.weak_rows(raw.iter().copied(), &mut rng);
            out.push(HeldBatch {
                domain_slot: slot,
                domain_id: s.domain_id,
                raw: Tensor::from_rows(&raw)?,
                weak: Tensor::from_rows(&weak)?,
                hidden: idx.iter().map(|&i| s.hidden.as_slice()[i]).collect(),
            });
        }
    }
    Ok(out)
}

/// Noise-free mask pair for a batch of unaugmented inputs.
pub fn mask_pair_for(bundle: &ModelBundle, raw: &Tensor) -> Result<MaskPair> {
    let mut g = Graph::new();
    let m = bundle.bind(&mut g, false)?;
    let x = g.constant(raw.clone())?;
    let f = m.features(&mut g, x)?;
    let pair = make_mask_pair_with(&mut g, &m, f, None, &bundle.config)?;
    pair.values(&g)
}

/// The pseudo-labeling mask for a batch.
pub fn pseudo_label_mask(bundle: &ModelBundle, raw: &Tensor) -> Result<Tensor> {
    Ok(mask_pair_for(bundle, raw)?.mask_ss)
}

fn batch_logits(bundle: &ModelBundle, b: &HeldBatch, mask: Option<&Tensor>) -> Result<Tensor> {
    let mut g = Graph::new();
    let m = bundle.bind(&mut g, false)?;
    let x = g.constant(b.weak.clone())?;
    let f = m.features(&mut g, x)?;
    let mv = match mask {
        Some(t) => Some(g.constant(t.clone())?),
        None => None,
    };
    let z = masked_logits(&mut g, &m, b.domain_slot, f, mv)?;
    Ok(g.value(z).clone())
}

/// A classifier to sweep: a trained bundle, with or without its
/// pseudo-labeling mask.
#[derive(Debug, Clone, Copy)]
pub struct SweepVariant<'a> {
    pub name: &'a str,
    pub bundle: &'a ModelBundle,
    pub use_mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub name: String,
    /// Pooled over all batches; `None` when nothing was accepted.
    pub pl_accuracy: Vec<Option<f64>>,
    pub utilization: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub thresholds: Vec<f64>,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    pub fn series(&self, name: &str) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Whether utilization never increases with the threshold, for every
    /// variant. Thresholds are compared in sorted order.
    pub fn utilization_monotone(&self) -> bool {
        let mut order: Vec<usize> = (0..self.thresholds.len()).collect();
        order.sort_by(|&a, &b| self.thresholds[a].total_cmp(&self.thresholds[b]));
        self.series
            .iter()
            .all(|s| order.windows(2).all(|w| s.utilization[w[1]] <= s.utilization[w[0]]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,tau,pl_accuracy,utilization\n");
        for series in &self.series {
            for (i, tau) in self.thresholds.iter().enumerate() {
                let acc = series.pl_accuracy[i].map(|v| v.to_string()).unwrap_or_default();
                s.push_str(&format!("{},{tau},{acc},{}\n", series.name, series.utilization[i]));
            }
        }
        s
    }
}

/// Pooled PL accuracy and utilization of every variant at every threshold.
/// Logits are computed once per batch and variant.
pub fn threshold_sweep(variants: &[SweepVariant<'_>], batches: &[HeldBatch], thresholds: &[f64]) -> Result<SweepResult> {
    if batches.is_empty() {
        return Err(Error::EmptyBatch("threshold_sweep"));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::param(format!("tau must lie in (0, 1], got {t}")));
    }
    let mut series = Vec::with_capacity(variants.len());
    for v in variants {
        let k = thresholds.len();
        let (mut acc, mut cor, mut cand) = (vec![0usize; k], vec![0usize; k], 0usize);
        for b in batches {
            let mask = if v.use_mask { Some(pseudo_label_mask(v.bundle, &b.raw)?) } else { None };
            let logits = batch_logits(v.bundle, b, mask.as_ref())?;
            cand += b.hidden.len();
            for (i, &tau) in thresholds.iter().enumerate() {
                let r = pseudo_label_from_logits(&logits, tau, Some(&b.hidden))?;
                acc[i] += r.accepted.len();
                cor[i] += r.num_correct;
            }
        }
        series.push(SweepSeries {
            name: v.name.to_string(),
            pl_accuracy: (0..k).map(|i| (acc[i] > 0).then(|| cor[i] as f64 / acc[i] as f64)).collect(),
            utilization: (0..k).map(|i| acc[i] as f64 / cand as f64).collect(),
        });
    }
    Ok(SweepResult { thresholds: thresholds.to_vec(), series })
}

/// Restricted-logit diagnostics of one evaluation epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub epoch: usize,
    /// Mean over held batches of `pl_agreement(restricted, full)`.
    pub restricted_vs_full: f64,
    /// Same with the sign-flipped restriction.
    pub flipped_vs_full: f64,
    pub full_pl_accuracy: Option<f64>,
    pub restricted_pl_accuracy: Option<f64>,
    pub flipped_pl_accuracy: Option<f64>,
}

impl AgreementRow {
    pub const CSV_HEADER: &'static str =
        "epoch,restricted_vs_full,flipped_vs_full,full_pl_accuracy,restricted_pl_accuracy,flipped_pl_accuracy";

    pub fn csv_line(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.restricted_vs_full,
            self.flipped_vs_full,
            o(self.full_pl_accuracy),
            o(self.restricted_pl_accuracy),
            o(self.flipped_pl_accuracy)
        )
    }
}

/// Evaluates restricted and sign-flipped pseudo-labels against the full
/// modulated ones on fixed batches after every epoch.
pub struct AgreementObserver {
    pub batches: Vec<HeldBatch>,
    pub tau: f64,
    pub rows: Vec<AgreementRow>,
}

impl AgreementObserver {
    pub fn new(batches: Vec<HeldBatch>, tau: f64) -> Self {
        Self { batches, tau, rows: Vec::new() }
    }

    pub fn evaluate(&self, epoch: usize, bundle: &ModelBundle) -> Result<AgreementRow> {
        if self.batches.is_empty() {
            return Err(Error::EmptyBatch("agreement"));
        }
        let (mut r_sum, mut f_sum) = (0.0, 0.0);
        let mut tallies = [(0usize, 0usize); 3];
        for b in &self.batches {
            let pair = mask_pair_for(bundle, &b.raw)?;
            let h = Some(b.hidden.as_slice());
            let full = pseudo_label(bundle, b.domain_slot, &b.weak, Some(&pair.mask_ss), self.tau, h)?;
            let res = restricted_pseudo_label(bundle, b.domain_slot, &b.weak, &pair, self.tau, h, Restriction::BySign)?;
            let flip = restricted_pseudo_label(bundle, b.domain_slot, &b.weak, &pair, self.tau, h, Restriction::Flipped)?;
            r_sum += pl_agreement(&res, &full);
            f_sum += pl_agreement(&flip, &full);
            for (t, r) in tallies.iter_mut().zip([&full, &res, &flip]) {
                t.0 += r.accepted.len();
                t.1 += r.num_correct;
            }
        }
        let n = self.batches.len() as f64;
        let acc = |(a, c): (usize, usize)| (a > 0).then(|| c as f64 / a as f64);
        Ok(AgreementRow {
            epoch,
            restricted_vs_full: r_sum / n,
            flipped_vs_full: f_sum / n,
            full_pl_accuracy: acc(tallies[0]),
            restricted_pl_accuracy: acc(tallies[1]),
            flipped_pl_accuracy: acc(tallies[2]),
        })
    }
}

impl TrainObserver for AgreementObserver {
    fn on_epoch_end(&mut self, epoch: usize, bundle: &ModelBundle) -> Result<()> {
        let row = self.evaluate(epoch, bundle)?;
        self.rows.push(row);
        Ok(())
    }
}
