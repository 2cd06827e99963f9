//! Dataset CSV (`domain,label,x_0..x_{D-1}`) with a JSON sidecar carrying
//! the generating spec. Values are written in shortest round-trip form, so
//! import reproduces the exported bits.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Domain, MultiDomainDataset, Sample, ShiftSpec};

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: ShiftSpec,
    domain_names: Vec<String>,
}

pub fn write_dataset_csv<W: Write>(dataset: &MultiDomainDataset, mut out: W) -> std::io::Result<()> {
    write!(out, "domain,label")?;
    for j in 0..dataset.input_dim() {
        write!(out, ",x_{j}")?;
    }
    writeln!(out)?;
    for (k, domain) in dataset.domains.iter().enumerate() {
        for s in &domain.samples {
            write!(out, "{k},{}", s.label)?;
            for v in &s.x {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Parse dataset rows; returns per-domain samples in file order.
pub fn read_dataset_csv<R: Read>(input: R, input_dim: usize, num_classes: usize) -> Result<Vec<Vec<Sample>>> {
    let fmt_err = |line: usize, detail: String| Error::Format { what: "dataset csv", line, detail };
    let mut domains: Vec<Vec<Sample>> = Vec::new();
    let reader = BufReader::new(input);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| fmt_err(lineno, e.to_string()))?;
        if i == 0 {
            let expected = 2 + input_dim;
            let cols = line.split(',').count();
            if !line.starts_with("domain,label") || cols != expected {
                return Err(fmt_err(lineno, format!("expected header with {expected} columns")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + input_dim {
            return Err(fmt_err(lineno, format!("{} columns, expected {}", fields.len(), 2 + input_dim)));
        }
        let domain: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| fmt_err(lineno, format!("domain: {e}")))?;
        let label: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| fmt_err(lineno, format!("label: {e}")))?;
        if label >= num_classes {
            return Err(fmt_err(lineno, format!("label {label} >= {num_classes} classes")));
        }
        let x = fields[2..]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| fmt_err(lineno, format!("value: {e}")))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fmt_err(lineno, "non-finite value".into()));
        }
        if domain >= domains.len() {
            domains.resize_with(domain + 1, Vec::new);
        }
        domains[domain].push(Sample { x, label });
    }
    Ok(domains)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Write `path` (CSV) and its `.json` sidecar.
pub fn export_dataset(dataset: &MultiDomainDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset_csv(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta = Sidecar {
        spec: dataset.spec.clone(),
        domain_names: dataset.domains.iter().map(|d| d.name.clone()).collect(),
    };
    fs::write(&side, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn import_dataset(path: &Path) -> Result<MultiDomainDataset> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar = serde_json::from_str(&text)?;
    meta.spec.validate()?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let per_domain = read_dataset_csv(file, meta.spec.input_dim, meta.spec.num_classes)?;
    if per_domain.len() != meta.domain_names.len() {
        return Err(Error::Format {
            what: "dataset csv",
            line: 0,
            detail: format!(
                "{} domains in csv, {} in sidecar",
                per_domain.len(),
                meta.domain_names.len()
            ),
        });
    }
    Ok(MultiDomainDataset {
        spec: meta.spec,
        domains: meta
            .domain_names
            .into_iter()
            .zip(per_domain)
            .map(|(name, samples)| Domain { name, samples })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate;

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = generate(&ShiftSpec {
            samples_per_class_per_domain: 7,
            ..ShiftSpec::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        export_dataset(&ds, &path).unwrap();
        assert!(path.with_extension("json").exists());
        assert_eq!(import_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn header_and_row_errors() {
        let bad = "domain,label,x_0\n0,0,1.0\n0,zz,2.0\n";
        match read_dataset_csv(bad.as_bytes(), 1, 2) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_dataset_csv("a,b\n".as_bytes(), 1, 2).is_err());
        assert!(read_dataset_csv("domain,label,x_0\n0,5,1.0\n".as_bytes(), 1, 2).is_err());
    }

    #[test]
    fn missing_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(import_dataset(&dir.path().join("none.csv")), Err(Error::Io { .. })));
    }
}
