//! Text checkpoint format.
//!
//! ```text
//! dgwm-checkpoint 1
//! config {"input_dim":20,...}
//! classifiers 3
//! tensor backbone.0.weight 20x64
//! 3fb999999999999a bfc3333333333333 ...
//! ...
//! end
//! ```
//!
//! Values are the IEEE-754 bit patterns in hex, so a load reproduces every
//! parameter bit for bit. Tensor lines follow the canonical parameter order
//! but are matched by name on load.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{ModelBundle, ModelConfig};

const MAGIC: &str = "dgwm-checkpoint 1";

pub fn write_checkpoint<W: Write>(bundle: &ModelBundle, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    let cfg = serde_json::to_string(&bundle.config).map_err(std::io::Error::other)?;
    writeln!(out, "config {cfg}")?;
    writeln!(out, "classifiers {}", bundle.classifiers.len())?;
    let mut result = Ok(());
    bundle.visit_params(|name, _, t| {
        if result.is_err() {
            return;
        }
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let bits: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        result = writeln!(out, "tensor {name} {}", dims.join("x"))
            .and_then(|_| writeln!(out, "{}", bits.join(" ")));
    });
    result?;
    writeln!(out, "end")
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<ModelBundle> {
    let fmt = |line: usize, detail: String| Error::Format {
        what: "checkpoint",
        line,
        detail,
    };
    let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(fmt(n, e.to_string())),
            None => Err(fmt(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(fmt(n, format!("bad header `{magic}`")));
    }
    let (n, cfg_line) = next("config")?;
    let cfg_json = cfg_line
        .strip_prefix("config ")
        .ok_or_else(|| fmt(n, "expected `config <json>`".into()))?;
    let cfg: ModelConfig = serde_json::from_str(cfg_json).map_err(|e| fmt(n, e.to_string()))?;
    let (n, cls_line) = next("classifier count")?;
    let count: usize = cls_line
        .strip_prefix("classifiers ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| fmt(n, "expected `classifiers <n>`".into()))?;

    let mut tensors: HashMap<String, (Vec<usize>, Vec<f64>, usize)> = HashMap::new();
    loop {
        let (n, line) = next("tensor or end")?;
        let line = line.trim();
        if line == "end" {
            break;
        }
        let mut parts = line.split_whitespace();
        let (Some("tensor"), Some(name), Some(dims), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(fmt(n, format!("expected `tensor <name> <dims>`, got `{line}`")));
        };
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fmt(n, e.to_string()))?;
        let (vn, values) = next("tensor values")?;
        let data = values
            .split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fmt(vn, e.to_string()))?;
        tensors.insert(name.to_string(), (shape, data, n));
    }

    let mut bundle = ModelBundle::zeros(&cfg, count)?;
    let names: Vec<String> = bundle.params().into_iter().map(|(n, _, _)| n).collect();
    for (name, slot) in names.iter().zip(bundle.params_mut()) {
        let (shape, data, line) = tensors
            .remove(name)
            .ok_or_else(|| fmt(0, format!("missing tensor `{name}`")))?;
        if shape != slot.shape() || data.len() != slot.len() {
            return Err(fmt(
                line,
                format!("tensor `{name}` has shape {shape:?}, expected {:?}", slot.shape()),
            ));
        }
        slot.data_mut().copy_from_slice(&data);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(fmt(0, format!("unexpected tensor `{extra}`")));
    }
    Ok(bundle)
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(bundle, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(file)
}
