//! Run directories, provenance sidecars and trial aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment fallback for the output root.
pub const OUTPUT_ENV: &str = "DGWM_OUTPUT_DIR";

/// Output root when neither a flag, the config nor the environment names one.
pub const DEFAULT_OUTPUT: &str = "runs";

/// `<command>-<first 12 hex digits of sha256(command, config hash, extra)>`.
pub fn run_id(command: &str, config_hash: &str, extra: &str) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(config_hash.as_bytes());
    h.update([0]);
    h.update(extra.as_bytes());
    let hex: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{command}-{hex}")
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    timestamp_unix: u64,
}

/// A directory under `<output_dir>/<run_id>/`. Every file written through it
/// gets a `<name>.meta.json` sidecar.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub command: String,
    pub config_hash: String,
}

impl RunDir {
    pub fn create(root: PathBuf, command: &str, config_hash: &str) -> std::io::Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(Self { root, command: command.into(), config_hash: config_hash.into() })
    }

    pub fn sub(&self, name: &str) -> std::io::Result<Self> {
        Self::create(self.root.join(name), &self.command, &self.config_hash)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write the sidecar for a file that already exists under this directory.
    pub fn stamp(&self, name: &str, seed: u64) -> std::io::Result<()> {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let p = Provenance { command: &self.command, config_hash: &self.config_hash, seed, timestamp_unix: ts };
        let text = serde_json::to_string_pretty(&p).map_err(std::io::Error::other)?;
        fs::write(self.path(&format!("{name}.meta.json")), text)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>, seed: u64) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents)?;
        self.stamp(name, seed)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T, seed: u64) -> std::io::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        self.write(name, text + "\n", seed)
    }
}

/// Mean and sample standard deviation of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

/// Welford's running mean and variance.
#[derive(Debug, Default, Clone)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
    values: Vec<f64>,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        self.values.push(x);
    }

    /// `None` when nothing was pushed; std is 0 for a single value.
    pub fn stat(&self) -> Option<Stat> {
        (self.n > 0).then(|| Stat {
            mean: self.mean,
            std: if self.n > 1 { (self.m2 / (self.n - 1) as f64).sqrt() } else { 0.0 },
            n: self.n,
            values: self.values.clone(),
        })
    }
}

/// Per-metric statistics keyed by metric name. Missing values are skipped.
pub fn aggregate<'a>(trials: impl IntoIterator<Item = &'a BTreeMap<String, Option<f64>>>) -> BTreeMap<String, Option<Stat>> {
    let mut acc: BTreeMap<String, Welford> = BTreeMap::new();
    for t in trials {
        for (k, v) in t {
            let w = acc.entry(k.clone()).or_default();
            if let Some(x) = v {
                w.push(*x);
            }
        }
    }
    acc.into_iter().map(|(k, w)| (k, w.stat())).collect()
}

pub fn format_stat(s: &Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4} (n={})", s.mean, s.std, s.n),
        None => "n/a".into(),
    }
}
