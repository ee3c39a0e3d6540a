//! CSV domain files: header `domain,label,f0,…,f{d−1}`, one row per sample,
//! rows grouped by ascending domain. Floats are written with 17 significant
//! digits so a save/load round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::synthetic::DatasetMeta;
use super::{Domain, DomainSequence, SplitSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a sequence, taking the class count as one past the largest label
/// (at least 2).
pub fn load_csv_domains(path: &Path) -> Result<DomainSequence> {
    load_csv_domains_with(path, None)
}

/// Loads a sequence. With `classes` given, any label `≥ classes` is an error.
pub fn load_csv_domains_with(path: &Path, classes: Option<usize>) -> Result<DomainSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: missing header `domain,label,f0,...`"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "label" {
        return Err(parse_err(
            path,
            1,
            format!("header must start with `domain,label,f0`, found {header:?}"),
        ));
    }
    let dim = cols.len() - 2;
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(parse_err(path, 1, format!("feature column {k} is named {c:?}, expected f{k}")));
        }
    }

    let mut domains: Vec<(usize, Vec<f64>, Vec<usize>, usize)> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                path,
                ln,
                format!("expected {} columns, found {}", dim + 2, fields.len()),
            ));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad domain index {:?}", fields[0])))?;
        let y: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad label {:?}", fields[1])))?;
        if let Some(c) = classes {
            if y >= c {
                return Err(parse_err(path, ln, format!("label {y} out of range for {c} classes")));
            }
        }
        match domains.last() {
            Some(&(prev, ..)) if t == prev => {}
            Some(&(prev, ..)) if t == prev + 1 => domains.push((t, Vec::new(), Vec::new(), ln)),
            Some(&(prev, ..)) => {
                return Err(parse_err(
                    path,
                    ln,
                    format!("domain indices must be contiguous and ascending: {prev} is followed by {t}"),
                ))
            }
            None => domains.push((t, Vec::new(), Vec::new(), ln)),
        }
        let d = domains.last_mut().expect("pushed above");
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, ln, format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, ln, format!("non-finite feature value {f:?}")));
            }
            d.1.push(v);
        }
        d.2.push(y);
    }
    if domains.is_empty() {
        return Err(parse_err(path, 2, "no samples after the header"));
    }
    let max_label = domains.iter().flat_map(|d| d.2.iter()).copied().max().unwrap_or(0);
    let classes = classes.unwrap_or((max_label + 1).max(2));
    let domains = domains
        .into_iter()
        .map(|(t, x, y, _)| {
            let x = Tensor::from_vec(y.len(), dim, x)?;
            Ok(Domain { t, x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    DomainSequence::new(domains, classes)
}

pub fn save_csv_domains(seq: &DomainSequence, path: &Path) -> Result<()> {
    let mut out = String::from("domain,label");
    for k in 0..seq.dim() {
        write!(out, ",f{k}").expect("string write");
    }
    out.push('\n');
    for d in seq.domains() {
        for (i, &y) in d.y.iter().enumerate() {
            write!(out, "{},{y}", d.t).expect("string write");
            for &v in d.x.row(i) {
                write!(out, ",{v:.16e}").expect("string write");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Sidecar metadata path: `data.csv` → `data.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn save_meta(meta: &DatasetMeta, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Invalid(format!("cannot encode metadata: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_meta(path: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Loads a CSV together with its metadata sidecar when one exists. The
/// split is `split` if given, else the one recorded in the sidecar.
pub fn load_dataset(path: &Path, split: Option<SplitSpec>) -> Result<(DomainSequence, SplitSpec)> {
    let meta_file = meta_path(path);
    let meta = if meta_file.is_file() {
        Some(load_meta(&meta_file)?)
    } else {
        None
    };
    let seq = load_csv_domains_with(path, meta.as_ref().map(|m| m.classes))?;
    let spec = split.or(meta.map(|m| m.split)).ok_or_else(|| {
        Error::Invalid(format!(
            "no split given and no metadata at {} to take it from",
            meta_file.display()
        ))
    })?;
    Ok((seq, spec))
}
