//! Delimited-table input, plain-text configs, number formatting, and the
//! per-run manifest every command writes next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::ColMatrix;
use crate::error::{Error, Result};

/// A parsed input table: the chosen response column plus every other column
/// as a named covariate, in original order.
#[derive(Debug, Clone)]
pub struct InputTable {
    pub response_name: String,
    pub y: Vec<f64>,
    /// Covariate names, from the header or synthesized as x<position>.
    pub names: Vec<String>,
    pub x: ColMatrix,
}

/// Reads a comma- or tab-delimited table (auto-detected from the first
/// line). A header row is assumed when any field of the first row fails to
/// parse as a number. `response` picks the response column by 1-based
/// position or by name; every cell must be a finite number.
pub fn read_table(path: &Path, response: &str) -> Result<InputTable> {
    let text = fs::read_to_string(path)?;
    let delim = if text.lines().next().is_some_and(|l| l.contains('\t')) { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| Error::Data(format!("malformed table: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::Data("input table is empty".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Data("rows have inconsistent field counts".into()));
    }
    let has_header = rows[0].iter().any(|f| f.parse::<f64>().is_err());
    let names: Vec<String> = if has_header {
        rows[0].iter().map(|f| f.to_string()).collect()
    } else {
        (1..=width).map(|k| format!("x{k}")).collect()
    };
    let data = &rows[if has_header { 1 } else { 0 }..];
    if data.len() < 3 {
        return Err(Error::Data("need at least 3 data rows".into()));
    }
    if width < 2 {
        return Err(Error::Data("need a response column plus at least 1 covariate".into()));
    }

    let resp_idx = match response.parse::<usize>() {
        Ok(k) if (1..=width).contains(&k) => k - 1,
        Ok(k) => {
            return Err(Error::Argument(format!(
                "response position {k} outside 1..={width}"
            )))
        }
        Err(_) => names.iter().position(|n| n == response).ok_or_else(|| {
            Error::Argument(format!(
                "response column '{response}' not found; columns are: {}",
                names.join(", ")
            ))
        })?,
    };

    let mut cols = vec![Vec::with_capacity(data.len()); width];
    for (r, rec) in data.iter().enumerate() {
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column {} ({}): unparseable value '{}'",
                    r + 1,
                    c + 1,
                    names[c],
                    field
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {}, column {} ({}): non-finite value '{}'",
                    r + 1,
                    c + 1,
                    names[c],
                    field
                )));
            }
            cols[c].push(v);
        }
    }
    let y = cols.remove(resp_idx);
    let mut cov_names = names;
    let response_name = cov_names.remove(resp_idx);
    Ok(InputTable { response_name, y, names: cov_names, x: ColMatrix::from_columns(cols)? })
}

/// Everything needed to re-run a command identically, written as
/// manifest.json beside the outputs. `wall_time_s` is the one field allowed
/// to differ between repeated runs.
#[derive(Debug, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub options: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub input_digest: Option<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            options: BTreeMap::new(),
            seed: None,
            input_digest: None,
            wall_time_s: 0.0,
        }
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.options.insert(key.to_string(), value.to_string());
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Parses a plain-text config: one `key = value` per line, `#` comments,
/// blank lines ignored, keys lowercased. Repeating a key is an error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{}'", ln + 1, line))
        })?;
        let key = key.trim().to_lowercase();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", ln + 1)));
        }
        if out.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{}'", ln + 1, key)));
        }
    }
    Ok(out)
}

/// Splits a comma-separated config value into trimmed items.
pub fn split_list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

/// Full-precision scientific form; 17 significant digits round-trip f64.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// 4 significant digits for human-facing tables.
pub fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.000".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..=6).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}
