//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use dgwm::analysis::{
    adding_domains_study, held_batches, overhead_report, run_verify_suite, threshold_sweep, AgreementObserver,
    AgreementRow, SweepVariant,
};
use dgwm::data::{export_dataset, generate, import_dataset, split, Augmenter, MultiDomainDataset, TargetView, TrainingView};
use dgwm::model::{load_checkpoint, save_checkpoint};
use dgwm::pipeline::{accuracy, train as train_run, NoObserver, RunRecord};
use serde::Serialize;
use thiserror::Error;

use crate::config::{load_config, ConfigError, ExperimentConfig, KEYS};
use crate::output::{aggregate, format_stat, run_id, RunDir, Stat, DEFAULT_OUTPUT, OUTPUT_ENV};
use crate::Common;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] dgwm::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CliError>;

fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, found `{s}`")))
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &common.set {
        let (k, v) = split_assignment(s)?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(s) = &common.setting {
        cfg.set("setting", s)?;
    }
    if let Some(n) = common.labels_per_class {
        cfg.labels_per_class = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_root(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn run_dir(common: &Common, cfg: &ExperimentConfig, command: &str, extra: &str) -> Result<RunDir> {
    let hash = cfg.hash();
    let id = common.run_id.clone().unwrap_or_else(|| run_id(command, &hash, extra));
    let dir = RunDir::create(output_root(common, cfg).join(id), command, &hash)?;
    dir.write("config.txt", cfg.render(), cfg.train.seed)?;
    Ok(dir)
}

fn dataset(cfg: &ExperimentConfig) -> Result<MultiDomainDataset> {
    Ok(match &cfg.data_path {
        Some(p) => import_dataset(p)?,
        None => generate(&cfg.data)?,
    })
}

fn views(cfg: &ExperimentConfig, data: &MultiDomainDataset) -> Result<(TrainingView, TargetView)> {
    let plan = cfg.plan(data.num_domains(), cfg.train.seed);
    Ok(split(data, &plan)?)
}

/// Metrics reported per trial and aggregated across trials.
fn trial_metrics(record: &RunRecord) -> BTreeMap<String, Option<f64>> {
    let s = record.summary();
    let epochs = record.train_config.epochs;
    BTreeMap::from([
        ("final_target_accuracy".to_string(), s.final_target_accuracy),
        ("final_pl_accuracy".to_string(), s.final_pl_accuracy),
        ("mean_pl_accuracy".to_string(), s.mean_pl_accuracy),
        ("mean_pl_accuracy_epochs_5_plus".to_string(), record.mean_pl_accuracy(5, epochs)),
        ("mean_pl_utilization".to_string(), s.mean_pl_utilization),
    ])
}

#[derive(Serialize)]
struct Aggregate {
    trials: usize,
    seeds: Vec<u64>,
    metrics: BTreeMap<String, Option<Stat>>,
}

/// Train `cfg.trials` runs with seeds `seed + i`, each in its own thread and
/// its own `trial-i` directory, and write `aggregate.json`.
fn run_trials(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Aggregate> {
    let data = dataset(cfg)?;
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| cfg.train.seed + i).collect();
    let results: Vec<Result<BTreeMap<String, Option<f64>>>> = thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| {
                let data = &data;
                s.spawn(move || -> Result<BTreeMap<String, Option<f64>>> {
                    let mut c = cfg.clone();
                    c.train.seed = seed;
                    let (view, target) = views(&c, data)?;
                    let mc = c.model_for(data.input_dim(), data.num_classes());
                    let (bundle, record) = train_run(&view, Some(&target), &c.train, &mc, &mut NoObserver)?;
                    let t = dir.sub(&format!("trial-{i}"))?;
                    t.write("record.csv", record.to_csv(false), seed)?;
                    let mut summary = record.summary();
                    let seconds = summary.mean_epoch_seconds.take();
                    t.write_json("summary.json", &summary, seed)?;
                    t.write_json("timing.json", &serde_json::json!({ "mean_epoch_seconds": seconds }), seed)?;
                    save_checkpoint(&bundle, &t.path("checkpoint.txt"))?;
                    t.stamp("checkpoint.txt", seed)?;
                    if c.train.record_domain_info {
                        dgwm::analysis::export_domain_info(&record, &t.path("domain_info.csv"))?;
                        t.stamp("domain_info.csv", seed)?;
                    }
                    Ok(trial_metrics(&record))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    let agg = Aggregate { trials: cfg.trials, seeds, metrics: aggregate(&per_trial) };
    dir.write_json("aggregate.json", &agg, cfg.train.seed)?;
    Ok(agg)
}

fn print_aggregate(agg: &Aggregate) {
    for (k, s) in &agg.metrics {
        println!("  {k:<32} {}", format_stat(s));
    }
}

pub fn train(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let dir = run_dir(common, &cfg, "train", "")?;
    let agg = run_trials(&cfg, &dir)?;
    println!("train: {} trial(s), seeds {:?}", agg.trials, agg.seeds);
    print_aggregate(&agg);
    println!("outputs in {}", dir.root.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(common: &Common, checkpoint: &Path) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let bundle = load_checkpoint(checkpoint)?;
    let data = dataset(&cfg)?;
    let (_, target) = views(&cfg, &data)?;
    let acc = accuracy(&bundle, &target.samples)?;
    let dir = run_dir(common, &cfg, "eval", &checkpoint.display().to_string())?;
    dir.write_json(
        "eval.json",
        &serde_json::json!({
            "checkpoint": checkpoint.display().to_string(),
            "target_domain": target.domain_id,
            "target_accuracy": acc,
        }),
        cfg.train.seed,
    )?;
    println!("target domain {} accuracy {acc:.4}", target.domain_id);
    Ok(ExitCode::SUCCESS)
}

/// Parse `KEY=V1,V2` grid axes; the key must be a config key.
fn parse_grid(grid: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    grid.iter()
        .map(|g| {
            let (k, vs) = split_assignment(g)?;
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.into()).into());
            }
            let vals: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if vals.is_empty() {
                return Err(CliError::Usage(format!("grid axis `{k}` has no values")));
            }
            Ok((k.to_string(), vals))
        })
        .collect()
}

/// Cartesian product of the axes, first axis slowest.
fn cells(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (k, vals)| {
        acc.iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((k.clone(), v.clone()));
                    c
                })
            })
            .collect()
    })
}

pub fn ablate(common: &Common, grid: &[String]) -> Result<ExitCode> {
    let base = resolve(common)?;
    let axes = parse_grid(grid)?;
    let cells = cells(&axes);
    let mut configs = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut c = base.clone();
        for (k, v) in cell {
            c.set(k, v)?;
        }
        c.validate()?;
        configs.push(c);
    }
    let dir = run_dir(common, &base, "ablate", &grid.join(";"))?;
    let mut table = String::from("cell,final_target_accuracy_mean,final_target_accuracy_std,mean_pl_accuracy_mean,mean_pl_accuracy_std\n");
    println!("ablate: {} cell(s) × {} trial(s)", cells.len(), base.trials);
    for (i, (cell, c)) in cells.iter().zip(&configs).enumerate() {
        let name: Vec<String> = cell.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let name = name.join(" ");
        let sub = dir.sub(&format!("cell-{i}"))?;
        sub.write("config.txt", c.render(), c.train.seed)?;
        let agg = run_trials(c, &sub)?;
        let m = |k: &str| agg.metrics.get(k).cloned().flatten();
        let f = |s: &Option<Stat>| match s {
            Some(s) => format!("{},{}", s.mean, s.std),
            None => ",".into(),
        };
        table.push_str(&format!("{name},{},{}\n", f(&m("final_target_accuracy")), f(&m("mean_pl_accuracy"))));
        println!(
            "  {name:<40} target {}  PL {}",
            format_stat(&m("final_target_accuracy")),
            format_stat(&m("mean_pl_accuracy"))
        );
    }
    dir.write("ablation.csv", table, base.train.seed)?;
    println!("outputs in {}", dir.root.display());
    Ok(ExitCode::SUCCESS)
}

pub fn verify(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let results = run_verify_suite(cfg.train.seed)?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!r.passed);
        println!("{tag}  {:<width$}  {}", r.name, r.detail);
    }
    let dir = run_dir(common, &cfg, "verify", "")?;
    dir.write_json("verify.json", &results, cfg.train.seed)?;
    println!("{} passed, {failed} failed", results.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn sweep(common: &Common, thresholds: &[f64], per_domain: usize, batch_size: usize) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(CliError::Usage(format!("threshold {t} outside (0, 1]")));
    }
    let data = dataset(&cfg)?;
    let (view, target) = views(&cfg, &data)?;
    let mc = cfg.model_for(data.input_dim(), data.num_classes());
    let augmenter = Augmenter::fit(&view, cfg.train.augment)?;
    let batches = held_batches(&view, &augmenter, per_domain, batch_size, cfg.train.seed)?;

    let base_cfg = dgwm::pipeline::TrainConfig { modulation: false, ..cfg.train.clone() };
    let (baseline, _) = train_run(&view, Some(&target), &base_cfg, &mc, &mut NoObserver)?;
    let mod_cfg = dgwm::pipeline::TrainConfig { modulation: true, ..cfg.train.clone() };
    let mut observer = AgreementObserver::new(batches.clone(), cfg.train.tau);
    let (modulated, _) = train_run(&view, Some(&target), &mod_cfg, &mc, &mut observer)?;

    let variants = [
        SweepVariant { name: "baseline", bundle: &baseline, use_mask: false },
        SweepVariant { name: "modulated", bundle: &modulated, use_mask: true },
    ];
    let result = threshold_sweep(&variants, &batches, thresholds)?;
    let dir = run_dir(common, &cfg, "sweep", &format!("{thresholds:?}/{per_domain}/{batch_size}"))?;
    dir.write("sweep.csv", result.to_csv(), cfg.train.seed)?;
    let mut agreement = String::from(AgreementRow::CSV_HEADER);
    agreement.push('\n');
    for r in &observer.rows {
        agreement.push_str(&r.csv_line());
        agreement.push('\n');
    }
    dir.write("agreement.csv", agreement, cfg.train.seed)?;

    let o = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!("{:>6}  {:>10} {:>10}  {:>10} {:>10}", "tau", "PL base", "PL mod", "util base", "util mod");
    let (b, m) = (&result.series[0], &result.series[1]);
    for (i, tau) in result.thresholds.iter().enumerate() {
        println!(
            "{tau:>6}  {:>10} {:>10}  {:>10.4} {:>10.4}",
            o(b.pl_accuracy[i]),
            o(m.pl_accuracy[i]),
            b.utilization[i],
            m.utilization[i]
        );
    }
    println!("utilization monotone: {}", result.utilization_monotone());
    println!("outputs in {}", dir.root.display());
    Ok(ExitCode::SUCCESS)
}

pub fn gen_data(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let data = generate(&cfg.data)?;
    let dir = run_dir(common, &cfg, "gen-data", "")?;
    let path = dir.path("data.csv");
    export_dataset(&data, &path)?;
    dir.stamp("data.csv", cfg.data.seed)?;
    let n: usize = data.domains.iter().map(|d| d.samples.len()).sum();
    println!("{n} samples in {} domains written to {}", data.num_domains(), path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn add_domains(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let data = dataset(&cfg)?;
    let (view, target) = views(&cfg, &data)?;
    let mc = cfg.model_for(data.input_dim(), data.num_classes());
    let study = adding_domains_study(&view, &target, &cfg.train, &mc, None)?;
    let dir = run_dir(common, &cfg, "add-domains", "")?;
    dir.write("adding_domains.csv", study.to_csv(), cfg.train.seed)?;
    let k = view.sources.len();
    for modulation in [false, true] {
        let series = study.pl_series(modulation, 1, cfg.train.epochs);
        let cells: Vec<String> = series
            .iter()
            .map(|(p, v)| format!("{p}:{}", v.map_or("n/a".into(), |x| format!("{x:.4}"))))
            .collect();
        let drop = study.pl_drop(modulation, k).map_or("n/a".into(), |d| format!("{d:.4}"));
        let name = if modulation { "modulated" } else { "baseline" };
        println!("{name:<10} PL by sources {}  drop 1->{k}: {drop}", cells.join(" "));
    }
    println!("outputs in {}", dir.root.display());
    Ok(ExitCode::SUCCESS)
}

pub fn overhead(common: &Common, repeats: usize) -> Result<ExitCode> {
    let cfg = resolve(common)?;
    let data = dataset(&cfg)?;
    let (view, _) = views(&cfg, &data)?;
    let mc = cfg.model_for(data.input_dim(), data.num_classes());
    let report = overhead_report(&view, &cfg.train, &mc, repeats)?;
    let dir = run_dir(common, &cfg, "overhead", &repeats.to_string())?;
    dir.write_json("overhead.json", &report, cfg.train.seed)?;
    println!(
        "epoch seconds off {:.4} on {:.4}  overhead {:.1}%",
        report.seconds_off, report.seconds_on, report.overhead_percent
    );
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_product_order() {
        let axes = parse_grid(&["tau=0.9,0.95".into(), "mask_variant=low_rank,off".into()]).unwrap();
        let c = cells(&axes);
        assert_eq!(c.len(), 4);
        assert_eq!(c[1], vec![("tau".into(), "0.9".into()), ("mask_variant".into(), "off".into())]);
    }

    #[test]
    fn grid_rejects_unknown_keys() {
        assert!(matches!(parse_grid(&["nope=1".into()]), Err(CliError::Config(_))));
        assert!(matches!(parse_grid(&["tau".into()]), Err(CliError::Usage(_))));
        assert!(matches!(parse_grid(&["tau=".into()]), Err(CliError::Usage(_))));
    }

    #[test]
    fn flags_override_file_and_set() {
        let common = Common {
            set: vec!["tau=0.8".into(), "trials=2".into()],
            trials: Some(3),
            setting: Some("one-labeled-domain".into()),
            ..Common::default()
        };
        let cfg = resolve(&common).unwrap();
        assert_eq!(cfg.train.tau, 0.8);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.setting, crate::config::SettingKind::OneLabeledDomain);
    }
}
