use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

use super::TrainConfig;

/// `domain` value of the row pooled over all source domains.
pub const ALL_DOMAINS: &str = "all";

pub const CSV_HEADER: &str = "epoch,domain,pl_accuracy,pl_utilization,loss_labeled,loss_unlabeled,target_accuracy,lr_backbone,lr_head,wall_seconds";

/// Metrics of one domain (or the pooled `all` row) over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    /// 1-based.
    pub epoch: usize,
    pub domain: String,
    /// `None` when no pseudo-label passed the threshold during the epoch.
    pub pl_accuracy: Option<f64>,
    pub pl_utilization: f64,
    /// `None` for domains without labels.
    pub loss_labeled: Option<f64>,
    pub loss_unlabeled: f64,
    pub target_accuracy: Option<f64>,
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub wall_seconds: f64,
}

/// One step's domain vector for one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainInfoRow {
    pub epoch: usize,
    pub step: usize,
    pub domain_id: usize,
    pub info: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub rows: Vec<EpochRow>,
    /// Differentiated loss of every step, in order.
    pub step_losses: Vec<f64>,
    #[serde(default)]
    pub domain_info: Vec<DomainInfoRow>,
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub epochs: usize,
    pub final_target_accuracy: Option<f64>,
    pub final_pl_accuracy: Option<f64>,
    pub mean_pl_accuracy: Option<f64>,
    pub mean_pl_utilization: Option<f64>,
    pub mean_epoch_seconds: Option<f64>,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl RunRecord {
    pub fn new(cfg: &TrainConfig, model_cfg: &ModelConfig) -> Self {
        Self {
            train_config: cfg.clone(),
            model_config: model_cfg.clone(),
            rows: Vec::new(),
            step_losses: Vec::new(),
            domain_info: Vec::new(),
        }
    }

    /// Pooled rows, one per epoch.
    pub fn pooled(&self) -> impl Iterator<Item = &EpochRow> {
        self.rows.iter().filter(|r| r.domain == ALL_DOMAINS)
    }

    /// Mean pooled PL accuracy over 1-based epochs `from..=to`, skipping
    /// epochs without accepted pseudo-labels.
    pub fn mean_pl_accuracy(&self, from: usize, to: usize) -> Option<f64> {
        mean(
            self.pooled()
                .filter(|r| r.epoch >= from && r.epoch <= to)
                .filter_map(|r| r.pl_accuracy),
        )
    }

    pub fn final_target_accuracy(&self) -> Option<f64> {
        self.pooled().last().and_then(|r| r.target_accuracy)
    }

    pub fn mean_epoch_seconds(&self, skip_first: bool) -> Option<f64> {
        mean(self.pooled().skip(usize::from(skip_first)).map(|r| r.wall_seconds))
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.train_config.seed,
            epochs: self.pooled().count(),
            final_target_accuracy: self.final_target_accuracy(),
            final_pl_accuracy: self.pooled().last().and_then(|r| r.pl_accuracy),
            mean_pl_accuracy: mean(self.pooled().filter_map(|r| r.pl_accuracy)),
            mean_pl_utilization: mean(self.pooled().map(|r| r.pl_utilization)),
            mean_epoch_seconds: self.mean_epoch_seconds(false),
            train_config: self.train_config.clone(),
            model_config: self.model_config.clone(),
        }
    }

    /// The metric table; `with_wall = false` leaves the timing column empty
    /// so two runs can be compared byte for byte.
    pub fn to_csv(&self, with_wall: bool) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.domain,
                opt(r.pl_accuracy),
                r.pl_utilization,
                opt(r.loss_labeled),
                r.loss_unlabeled,
                opt(r.target_accuracy),
                r.lr_backbone,
                r.lr_head,
                if with_wall { r.wall_seconds.to_string() } else { String::new() },
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv(true)).map_err(|e| Error::io(path, e))
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, domain: &str, pl: f64) -> EpochRow {
        EpochRow {
            epoch,
            domain: domain.into(),
            pl_accuracy: Some(pl),
            pl_utilization: 0.5,
            loss_labeled: None,
            loss_unlabeled: 0.0,
            target_accuracy: Some(0.25),
            lr_backbone: 0.003,
            lr_head: 0.01,
            wall_seconds: 1.5,
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = RunRecord::new(&TrainConfig::default(), &ModelConfig::new(4, 2));
        r.rows.push(row(1, "0", 0.5));
        r.rows.push(row(1, ALL_DOMAINS, 0.75));
        let csv = r.to_csv(true);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[2], "1,all,0.75,0.5,,0,0.25,0.003,0.01,1.5");
        assert!(r.to_csv(false).lines().nth(2).unwrap().ends_with("0.01,"));
        assert_eq!(r.mean_pl_accuracy(1, 1), Some(0.75));
        assert_eq!(r.summary().epochs, 1);
    }

    #[test]
    fn empty_record() {
        let r = RunRecord::new(&TrainConfig::default(), &ModelConfig::new(4, 2));
        assert_eq!(r.final_target_accuracy(), None);
        assert_eq!(r.mean_pl_accuracy(1, 20), None);
        assert_eq!(r.to_csv(true).lines().count(), 1);
    }
}
