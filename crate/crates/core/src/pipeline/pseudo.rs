use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::tensor::{argmax, softmax, Tensor};

use super::loss::masked_logits;

/// Outcome of thresholded pseudo-labeling on one domain's unlabeled batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelResult {
    /// Indices into the unlabeled batch, ascending.
    pub accepted: Vec<usize>,
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
    pub num_candidates: usize,
    /// Accepted labels that match the hidden ground truth.
    pub num_correct: usize,
    /// `num_correct / |accepted|`, 0 when nothing is accepted.
    pub pl_accuracy: f64,
    /// `|accepted| / num_candidates`.
    pub utilization: f64,
}

impl PseudoLabelResult {
    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }
}

/// `ln softmax(row)[label]` for the row maximum, computed as
/// `-ln(1 + Σ_{j≠label} exp(row[j] - row[label]))` so that confidences a hair
/// below 1 stay below 1.
fn log_confidence(row: &[f64], label: usize) -> f64 {
    let m = row[label];
    let rest: f64 = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label)
        .map(|(_, x)| (x - m).exp())
        .sum();
    -rest.ln_1p()
}

/// Threshold each row of `n × C` logits at confidence `tau`.
///
/// The comparison is done on log-probabilities, so `tau = 1` accepts nothing
/// for finite logits even when the rounded softmax maximum equals 1.
/// `hidden` feeds only the accuracy diagnostic.
pub fn pseudo_label_from_logits(
    logits: &Tensor,
    tau: f64,
    hidden: Option<&[usize]>,
) -> Result<PseudoLabelResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::param(format!("tau must lie in (0, 1], got {tau}")));
    }
    let (n, _) = logits.dims2()?;
    if let Some(h) = hidden {
        if h.len() != n {
            return Err(Error::dim("pseudo_label", format!("{n} rows, {} hidden labels", h.len())));
        }
    }
    let log_tau = tau.ln();
    let mut out = PseudoLabelResult {
        accepted: Vec::new(),
        labels: Vec::new(),
        confidences: Vec::new(),
        num_candidates: n,
        num_correct: 0,
        pl_accuracy: 0.0,
        utilization: 0.0,
    };
    for i in 0..n {
        let row = logits.row_slice(i);
        let label = argmax(row);
        let log_conf = log_confidence(row, label);
        if log_conf >= log_tau {
            out.accepted.push(i);
            out.labels.push(label);
            out.confidences.push(softmax(row)[label]);
            if hidden.is_some_and(|h| h[i] == label) {
                out.num_correct += 1;
            }
        }
    }
    if !out.accepted.is_empty() {
        out.pl_accuracy = out.num_correct as f64 / out.accepted.len() as f64;
    }
    out.utilization = out.accepted.len() as f64 / n as f64;
    Ok(out)
}

/// Pseudo-labels from already weakly augmented inputs, using the classifier
/// of `domain_slot` modulated by `mask` (unmodulated when `None`).
pub fn pseudo_label(
    bundle: &ModelBundle,
    domain_slot: usize,
    weak_inputs: &Tensor,
    mask: Option<&Tensor>,
    tau: f64,
    hidden: Option<&[usize]>,
) -> Result<PseudoLabelResult> {
    let mut g = Graph::new();
    let m = bundle.bind(&mut g, false)?;
    let x = g.constant(weak_inputs.clone())?;
    let f = m.features(&mut g, x)?;
    let mv = match mask {
        Some(t) => Some(g.constant(t.clone())?),
        None => None,
    };
    let z = masked_logits(&mut g, &m, domain_slot, f, mv)?;
    pseudo_label_from_logits(g.value(z), tau, hidden)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[[f64; 3]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn confident_row_is_accepted() {
        let r = pseudo_label_from_logits(&logits(&[[5.0, 0.0, 0.0]]), 0.95, Some(&[0])).unwrap();
        assert_eq!(r.accepted, vec![0]);
        assert_eq!(r.labels, vec![0]);
        assert!((r.confidences[0] - 0.98670).abs() < 1e-5);
        assert_eq!(r.pl_accuracy, 1.0);
        assert_eq!(r.utilization, 1.0);
    }

    #[test]
    fn tau_one_accepts_nothing() {
        let r = pseudo_label_from_logits(&logits(&[[60.0, 0.0, 0.0], [5.0, 0.0, 0.0]]), 1.0, None).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.pl_accuracy, 0.0);
        assert_eq!(r.utilization, 0.0);
    }

    #[test]
    fn tiny_tau_accepts_all() {
        let r = pseudo_label_from_logits(&logits(&[[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]]), 1e-9, Some(&[2, 1])).unwrap();
        assert_eq!(r.accepted, vec![0, 1]);
        // uniform row: tie goes to class 0
        assert_eq!(r.labels, vec![0, 1]);
        assert_eq!(r.num_correct, 1);
        assert_eq!(r.pl_accuracy, 0.5);
    }

    #[test]
    fn bad_tau() {
        assert!(pseudo_label_from_logits(&logits(&[[0.0; 3]]), 0.0, None).is_err());
        assert!(pseudo_label_from_logits(&logits(&[[0.0; 3]]), 1.1, None).is_err());
    }
}
