//! Flat `key=value` experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dgwm::data::{Setting, ShiftSpec, SplitPlan};
use dgwm::model::ModelConfig;
use dgwm::pipeline::TrainConfig;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Line { path: PathBuf, line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettingKind {
    FewLabels,
    OneLabeledDomain,
}

impl FromStr for SettingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().replace('-', "_").as_str() {
            "few_labels" => Ok(Self::FewLabels),
            "one_labeled_domain" => Ok(Self::OneLabeledDomain),
            other => Err(format!("unknown setting `{other}`")),
        }
    }
}

impl SettingKind {
    fn name(self) -> &'static str {
        match self {
            Self::FewLabels => "few_labels",
            Self::OneLabeledDomain => "one_labeled_domain",
        }
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: ShiftSpec,
    /// Read the dataset from this CSV instead of generating it.
    pub data_path: Option<PathBuf>,
    pub setting: SettingKind,
    pub labels_per_class: usize,
    pub labeled_domain: usize,
    /// `None` means the last domain.
    pub target: Option<usize>,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub trials: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data = ShiftSpec::default();
        let model = ModelConfig::new(data.input_dim, data.num_classes);
        Self {
            data,
            data_path: None,
            setting: SettingKind::FewLabels,
            labels_per_class: 10,
            labeled_domain: 0,
            target: None,
            train: TrainConfig::default(),
            model,
            trials: 5,
            output_dir: None,
        }
    }
}

/// Keys accepted by [`ExperimentConfig::set`], in rendering order.
pub const KEYS: &[&str] = &[
    "shift_kind",
    "num_domains",
    "num_classes",
    "input_dim",
    "samples_per_class",
    "shift_strength",
    "class_separation",
    "class_weights",
    "data_seed",
    "data_path",
    "setting",
    "labels_per_class",
    "labeled_domain",
    "target",
    "epochs",
    "steps_per_epoch",
    "labeled_batch",
    "unlabeled_batch",
    "include_labeled_in_unlabeled",
    "tau",
    "baseline",
    "entmin_weight",
    "modulation",
    "seed",
    "lr_backbone",
    "lr_head",
    "momentum",
    "update_per_domain",
    "weak_noise",
    "strong_noise",
    "strong_dropout",
    "strong_scale_lo",
    "strong_scale_hi",
    "record_domain_info",
    "feature_dim",
    "latent_dim",
    "hidden",
    "epsilon_sq",
    "noise_mode",
    "aggregation",
    "detach_domain_info",
    "mask_variant",
    "separate_classifiers",
    "trials",
    "output_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::Value {
        key: key.into(),
        msg: format!("`{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        other => Err(ConfigError::Value { key: key.into(), msg: format!("`{other}` is not a boolean") }),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let t = &mut self.train;
        let m = &mut self.model;
        match key.trim() {
            "shift_kind" => self.data.shift_kind = parse(key, v)?,
            "num_domains" => self.data.num_domains = parse(key, v)?,
            "num_classes" => self.data.num_classes = parse(key, v)?,
            "input_dim" => self.data.input_dim = parse(key, v)?,
            "samples_per_class" => self.data.samples_per_class_per_domain = parse(key, v)?,
            "shift_strength" => self.data.shift_strength = parse(key, v)?,
            "class_separation" => self.data.class_separation = parse(key, v)?,
            "class_weights" => {
                self.data.class_weights = if v.is_empty() { None } else { Some(parse_list(key, v)?) }
            }
            "data_seed" => self.data.seed = parse(key, v)?,
            "data_path" => self.data_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "setting" => self.setting = parse(key, v)?,
            "labels_per_class" => self.labels_per_class = parse(key, v)?,
            "labeled_domain" => self.labeled_domain = parse(key, v)?,
            "target" => self.target = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "epochs" => t.epochs = parse(key, v)?,
            "steps_per_epoch" => t.steps_per_epoch = parse(key, v)?,
            "labeled_batch" => t.batch.labeled = parse(key, v)?,
            "unlabeled_batch" => t.batch.unlabeled = parse(key, v)?,
            "include_labeled_in_unlabeled" => t.batch.include_labeled_in_unlabeled = parse_bool(key, v)?,
            "tau" => t.tau = parse(key, v)?,
            "baseline" => t.baseline = parse(key, v)?,
            "entmin_weight" => t.entmin_weight = parse(key, v)?,
            "modulation" => t.modulation = parse_bool(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "lr_backbone" => t.lr_backbone = parse(key, v)?,
            "lr_head" => t.lr_head = parse(key, v)?,
            "momentum" => t.momentum = parse(key, v)?,
            "update_per_domain" => t.update_per_domain = parse_bool(key, v)?,
            "weak_noise" => t.augment.weak_noise = parse(key, v)?,
            "strong_noise" => t.augment.strong_noise = parse(key, v)?,
            "strong_dropout" => t.augment.strong_dropout = parse(key, v)?,
            "strong_scale_lo" => t.augment.strong_scale_lo = parse(key, v)?,
            "strong_scale_hi" => t.augment.strong_scale_hi = parse(key, v)?,
            "record_domain_info" => t.record_domain_info = parse_bool(key, v)?,
            "feature_dim" => m.feature_dim = parse(key, v)?,
            "latent_dim" => m.latent_dim = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "hidden" => m.hidden = parse_list(key, v)?,
            "epsilon_sq" => m.epsilon_sq = parse(key, v)?,
            "noise_mode" => m.noise_mode = parse(key, v)?,
            "aggregation" => m.aggregation = parse(key, v)?,
            "detach_domain_info" => m.detach_domain_info = parse_bool(key, v)?,
            "mask_variant" => m.mask_variant = parse(key, v)?,
            "separate_classifiers" => m.separate_classifiers = parse_bool(key, v)?,
            "trials" => self.trials = parse(key, v)?,
            "output_dir" => self.output_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Current value of `key` in the same syntax [`ExperimentConfig::set`]
    /// accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let (d, t, m) = (&self.data, &self.train, &self.model);
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "shift_kind" => d.shift_kind.to_string(),
            "num_domains" => d.num_domains.to_string(),
            "num_classes" => d.num_classes.to_string(),
            "input_dim" => d.input_dim.to_string(),
            "samples_per_class" => d.samples_per_class_per_domain.to_string(),
            "shift_strength" => d.shift_strength.to_string(),
            "class_separation" => d.class_separation.to_string(),
            "class_weights" => d.class_weights.as_deref().map(join).unwrap_or_default(),
            "data_seed" => d.seed.to_string(),
            "data_path" => opt(&self.data_path),
            "setting" => self.setting.name().to_string(),
            "labels_per_class" => self.labels_per_class.to_string(),
            "labeled_domain" => self.labeled_domain.to_string(),
            "target" => self.target.map(|v| v.to_string()).unwrap_or_default(),
            "epochs" => t.epochs.to_string(),
            "steps_per_epoch" => t.steps_per_epoch.to_string(),
            "labeled_batch" => t.batch.labeled.to_string(),
            "unlabeled_batch" => t.batch.unlabeled.to_string(),
            "include_labeled_in_unlabeled" => t.batch.include_labeled_in_unlabeled.to_string(),
            "tau" => t.tau.to_string(),
            "baseline" => t.baseline.to_string(),
            "entmin_weight" => t.entmin_weight.to_string(),
            "modulation" => t.modulation.to_string(),
            "seed" => t.seed.to_string(),
            "lr_backbone" => t.lr_backbone.to_string(),
            "lr_head" => t.lr_head.to_string(),
            "momentum" => t.momentum.to_string(),
            "update_per_domain" => t.update_per_domain.to_string(),
            "weak_noise" => t.augment.weak_noise.to_string(),
            "strong_noise" => t.augment.strong_noise.to_string(),
            "strong_dropout" => t.augment.strong_dropout.to_string(),
            "strong_scale_lo" => t.augment.strong_scale_lo.to_string(),
            "strong_scale_hi" => t.augment.strong_scale_hi.to_string(),
            "record_domain_info" => t.record_domain_info.to_string(),
            "feature_dim" => m.feature_dim.to_string(),
            "latent_dim" => m.latent_dim.map(|v| v.to_string()).unwrap_or_default(),
            "hidden" => join(&m.hidden),
            "epsilon_sq" => m.epsilon_sq.to_string(),
            "noise_mode" => m.noise_mode.to_string(),
            "aggregation" => m.aggregation.to_string(),
            "detach_domain_info" => m.detach_domain_info.to_string(),
            "mask_variant" => m.mask_variant.to_string(),
            "separate_classifiers" => m.separate_classifiers.to_string(),
            "trials" => self.trials.to_string(),
            "output_dir" => opt(&self.output_dir),
            _ => return None,
        })
    }

    /// Apply every assignment in a config file. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| ConfigError::Line { path: path.to_path_buf(), line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key=value, found `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical `key=value` rendering of every key.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).unwrap_or_default());
        }
        s
    }

    /// SHA-256 of the rendering, excluding where outputs go.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| **k != "output_dir") {
            h.update(format!("{k}={}\n", self.get(k).unwrap_or_default()));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn setting_value(&self) -> Setting {
        match self.setting {
            SettingKind::FewLabels => Setting::FewLabels { per_class: self.labels_per_class },
            SettingKind::OneLabeledDomain => Setting::OneLabeledDomain { labeled_domain: self.labeled_domain },
        }
    }

    /// Holdout split of `num_domains` domains; the labeled-subset draw uses
    /// `seed`.
    pub fn plan(&self, num_domains: usize, seed: u64) -> SplitPlan {
        SplitPlan::holdout(num_domains, self.target.unwrap_or(num_domains - 1), self.setting_value(), seed)
    }

    /// Model config with input and class counts taken from the data.
    pub fn model_for(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig { input_dim, num_classes, ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: dgwm::Error| ConfigError::Invalid(e.to_string());
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.data_path.is_none() {
            self.data.validate().map_err(bad)?;
            self.plan(self.data.num_domains, 0).validate(self.data.num_domains).map_err(bad)?;
        }
        self.train.validate().map_err(bad)?;
        self.model_for(self.data.input_dim, self.data.num_classes).validate().map_err(bad)
    }
}

/// Read and apply a config file on top of the defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(&text, path)?;
    Ok(cfg)
}
