use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{DomainInfoRow, RunRecord};

/// CSV of `(epoch, step, domain_id, I[0..d-1])`, one row per recorded step
/// and domain.
pub fn write_domain_info_csv<W: Write>(rows: &[DomainInfoRow], mut out: W) -> std::io::Result<()> {
    let d = rows.first().map_or(0, |r| r.info.len());
    let mut header = String::from("epoch,step,domain_id");
    for j in 0..d {
        header.push_str(&format!(",i{j}"));
    }
    writeln!(out, "{header}")?;
    for r in rows {
        write!(out, "{},{},{}", r.epoch, r.step, r.domain_id)?;
        for v in &r.info {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn export_domain_info(record: &RunRecord, path: &Path) -> Result<()> {
    if record.domain_info.is_empty() {
        return Err(Error::Contract(
            "run has no domain vectors; train with record_domain_info".into(),
        ));
    }
    let mut buf = Vec::new();
    write_domain_info_csv(&record.domain_info, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_rows<R: Read>(input: R, path: &Path) -> Result<Vec<DomainInfoRow>> {
    let fmt = |line: usize, detail: String| Error::Format { what: "domain info csv", line, detail };
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(fmt(1, "missing header".into())),
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[..3] != ["epoch", "step", "domain_id"] {
        return Err(fmt(1, format!("unexpected header `{header}`")));
    }
    let d = cols.len() - 3;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != d + 3 {
            return Err(fmt(n, format!("expected {} fields, found {}", d + 3, f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| fmt(n, format!("`{s}`: {e}")));
        let info = f[3..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| fmt(n, format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(DomainInfoRow { epoch: int(f[0])?, step: int(f[1])?, domain_id: int(f[2])?, info });
    }
    Ok(out)
}

pub fn read_domain_info(path: &Path) -> Result<Vec<DomainInfoRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_rows(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![
            DomainInfoRow { epoch: 1, step: 1, domain_id: 0, info: vec![0.1, -1e-300, 1.0 / 3.0] },
            DomainInfoRow { epoch: 1, step: 2, domain_id: 2, info: vec![f64::MAX, 0.0, -7.25] },
        ];
        let mut buf = Vec::new();
        write_domain_info_csv(&rows, &mut buf).unwrap();
        let back = parse_rows(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn malformed_rows() {
        let bad = "epoch,step,domain_id,i0\n1,1,0\n";
        let err = parse_rows(bad.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
        assert!(parse_rows("a,b\n".as_bytes(), Path::new("mem")).is_err());
    }
}
