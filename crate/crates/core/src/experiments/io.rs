//! CSV results, plot tables and the JSON manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AssumptionRow, ResultRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "d,n,a_norm,rho_spa,rho_exact,rel_err,i_minus_one,eps,bound_total,wall_ms,status";

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn results_to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.d,
            r.n,
            num(r.a_norm),
            opt(r.rho_spa),
            opt(r.rho_exact),
            opt(r.rel_err),
            opt(r.i_minus_one),
            num(r.eps),
            opt(r.bound_total),
            opt(r.wall_ms),
            r.status.replace([',', '\n'], ";"),
        );
    }
    out
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|e| Error::Parse(format!("bad number '{field}': {e}")))
}

fn parse_req<T: std::str::FromStr>(field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| Error::Parse(format!("bad field '{field}': {e}")))
}

pub fn results_from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.splitn(11, ',').collect();
            if f.len() != 11 {
                return Err(Error::Parse(format!("expected 11 fields in '{line}'")));
            }
            Ok(ResultRecord {
                d: parse_req(f[0])?,
                n: parse_req(f[1])?,
                a_norm: parse_req(f[2])?,
                rho_spa: parse_opt(f[3])?,
                rho_exact: parse_opt(f[4])?,
                rel_err: parse_opt(f[5])?,
                i_minus_one: parse_opt(f[6])?,
                eps: parse_req(f[7])?,
                bound_total: parse_opt(f[8])?,
                wall_ms: parse_opt(f[9])?,
                status: f[10].to_string(),
            })
        })
        .collect()
}

pub const ASSUMPTIONS_HEADER: &str =
    "d,n,kappa_est,kappa_capped,delta_arg,delta_mod,magnitude_violations,exp_branch_violations,samples,status";

pub fn assumptions_to_csv(rows: &[AssumptionRow]) -> String {
    let mut out = String::from(ASSUMPTIONS_HEADER);
    out.push('\n');
    for row in rows {
        match &row.report {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},ok",
                    row.d,
                    row.n,
                    num(r.kappa_est),
                    r.kappa_capped,
                    num(r.delta_arg),
                    num(r.delta_mod),
                    r.magnitude_violations,
                    r.exp_branch_violations,
                    r.samples
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},{},,,,,,,,error: {}", row.d, row.n, e.replace([',', '\n'], ";"));
            }
        }
    }
    out
}

/// Which plot table to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// `eps rel_err d`
    ErrorScaling,
    /// `eps i_minus_one d`
    Correction,
    /// `n rel_err d`
    Clt,
}

impl PlotKind {
    pub fn header(&self) -> &'static str {
        match self {
            PlotKind::ErrorScaling => "eps rel_err d",
            PlotKind::Correction => "eps i_minus_one d",
            PlotKind::Clt => "n rel_err d",
        }
    }

    fn row(&self, r: &ResultRecord) -> Option<(f64, f64)> {
        match self {
            PlotKind::ErrorScaling => Some((r.eps, r.rel_err?)),
            PlotKind::Correction => Some((r.eps, r.i_minus_one?)),
            PlotKind::Clt => Some((r.n as f64, r.rel_err?)),
        }
    }
}

/// Whitespace-separated `x y series` table; rows lacking the y value are skipped.
pub fn plot_table(records: &[ResultRecord], kind: PlotKind) -> String {
    let mut out = String::from(kind.header());
    out.push('\n');
    for r in records {
        if let Some((x, y)) = kind.row(r) {
            let _ = writeln!(out, "{} {} {}", num(x), num(y), r.d);
        }
    }
    out
}

pub fn emit_plot_data(records: &[ResultRecord], kind: PlotKind, path: &Path) -> Result<()> {
    std::fs::write(path, plot_table(records, kind))?;
    Ok(())
}

/// Parses a plot table back into `(x, y, series)` triples.
pub fn read_plot_data(text: &str) -> Result<Vec<(f64, f64, usize)>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns in '{l}'")));
            }
            Ok((parse_req(f[0])?, parse_req(f[1])?, parse_req(f[2])?))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<S: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: String,
    pub spec: S,
    pub rows: usize,
    pub failures: usize,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes `files` under `dir` and a `manifest.json` listing each with its hash.
pub fn write_outputs<S: Serialize>(
    dir: &Path,
    files: &[(String, String)],
    mode: &str,
    spec: S,
    rows: usize,
    failures: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        entries.push(ManifestEntry { path: name.clone(), sha256: sha256_hex(content.as_bytes()), bytes: content.len() });
        written.push(path);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: mode.to_string(),
        spec,
        rows,
        failures,
        files: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, json + "\n")?;
    written.push(path);
    Ok(written)
}
