use serde::{Deserialize, Serialize};

use crate::data::{TargetView, TrainingView};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{train, NoObserver, RunRecord, TrainConfig};

/// One run of an adding-domains study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixRun {
    /// Number of source domains trained on.
    pub prefix: usize,
    pub modulation: bool,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddingDomainsStudy {
    pub runs: Vec<PrefixRun>,
}

impl AddingDomainsStudy {
    pub fn run(&self, prefix: usize, modulation: bool) -> Option<&PrefixRun> {
        self.runs.iter().find(|r| r.prefix == prefix && r.modulation == modulation)
    }

    /// Mean pooled PL accuracy over 1-based epochs `from..=to` for each
    /// prefix size, in ascending order.
    pub fn pl_series(&self, modulation: bool, from: usize, to: usize) -> Vec<(usize, Option<f64>)> {
        let mut out: Vec<(usize, Option<f64>)> = self
            .runs
            .iter()
            .filter(|r| r.modulation == modulation)
            .map(|r| (r.prefix, r.record.mean_pl_accuracy(from, to)))
            .collect();
        out.sort_by_key(|(p, _)| *p);
        out
    }

    /// PL accuracy with one source minus PL accuracy with `prefix` sources,
    /// averaged over all epochs.
    pub fn pl_drop(&self, modulation: bool, prefix: usize) -> Option<f64> {
        let all = |r: &PrefixRun| r.record.mean_pl_accuracy(1, r.record.train_config.epochs);
        let first = all(self.run(1, modulation)?)?;
        let last = all(self.run(prefix, modulation)?)?;
        Some(first - last)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("prefix,modulation,mean_pl_accuracy,final_target_accuracy\n");
        for r in &self.runs {
            let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let epochs = r.record.train_config.epochs;
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.prefix,
                r.modulation,
                o(r.record.mean_pl_accuracy(1, epochs)),
                o(r.record.final_target_accuracy())
            ));
        }
        s
    }
}

/// Train on source prefixes `prefixes` (default `1..=K`) with modulation off
/// and on, evaluating on the fixed target.
pub fn adding_domains_study(
    view: &TrainingView,
    target: &TargetView,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    prefixes: Option<&[usize]>,
) -> Result<AddingDomainsStudy> {
    let k = view.sources.len();
    if k < 2 {
        return Err(Error::param(format!("an adding-domains study needs at least 2 sources, got {k}")));
    }
    let all: Vec<usize> = (1..=k).collect();
    let prefixes = prefixes.unwrap_or(&all);
    let mut runs = Vec::with_capacity(2 * prefixes.len());
    for &p in prefixes {
        let sub = view.prefix(p)?;
        for modulation in [false, true] {
            let c = TrainConfig { modulation, ..cfg.clone() };
            let (_, record) = train(&sub, Some(target), &c, model_cfg, &mut NoObserver)?;
            runs.push(PrefixRun { prefix: p, modulation, record });
        }
    }
    Ok(AddingDomainsStudy { runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    /// Mean epoch seconds without modulation, warm-up epoch excluded.
    pub seconds_off: f64,
    pub seconds_on: f64,
    pub overhead_percent: f64,
}

/// `(t_on - t_off) / t_off × 100`.
pub fn overhead_percent(t_off: f64, t_on: f64) -> f64 {
    (t_on - t_off) / t_off * 100.0
}

/// Time `cfg` with modulation off and on. Each variant runs `repeats` times
/// and the fastest mean epoch time is kept, which suppresses scheduler noise.
pub fn overhead_report(
    view: &TrainingView,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    repeats: usize,
) -> Result<OverheadReport> {
    if cfg.epochs < 2 {
        return Err(Error::param("overhead timing needs at least 2 epochs (the first is warm-up)"));
    }
    if repeats == 0 {
        return Err(Error::param("repeats must be positive"));
    }
    let mut best = [f64::INFINITY; 2];
    for _ in 0..repeats {
        for (i, modulation) in [false, true].into_iter().enumerate() {
            let c = TrainConfig { modulation, eval_target: false, ..cfg.clone() };
            let (_, record) = train(view, None, &c, model_cfg, &mut NoObserver)?;
            let t = record.mean_epoch_seconds(true).expect("at least one timed epoch");
            best[i] = best[i].min(t);
        }
    }
    Ok(OverheadReport {
        seconds_off: best[0],
        seconds_on: best[1],
        overhead_percent: overhead_percent(best[0], best[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_formula() {
        assert_eq!(overhead_percent(2.0, 2.5), 25.0);
        assert_eq!(overhead_percent(1.5, 1.5), 0.0);
    }
}
