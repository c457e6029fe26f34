// SPDX-License-Identifier: Apache-2.0

//! Run summaries, the error-table CSV and atomic report writing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chernoff_core::rate::{fit_rate, RateFit, RateFlag};
use serde::Serialize;

use crate::config::{ExperimentConfig, SuiteName};
use crate::error::{KitError, KitResult, EXIT_FAIL, EXIT_PASS};

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: &str = "seminorm,t,n,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Flagged,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Flagged => "flagged",
        }
    }

    /// `Fail` dominates `Flagged`, which dominates `Pass`.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Flagged, _) | (_, Verdict::Flagged) => Verdict::Flagged,
            _ => Verdict::Pass,
        }
    }

    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One `seminorm,t,n,error` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCell {
    pub seminorm: String,
    pub t: f64,
    pub n: u64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRecord {
    pub seminorm: String,
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RateRecord {
    pub fn new(seminorm: &str, fit: Result<RateFit, RateFlag>) -> Self {
        match fit {
            Ok(f) => RateRecord {
                seminorm: seminorm.to_string(),
                slope: Some(f.slope),
                residual: Some(f.residual),
                ci_low: Some(f.ci_low),
                ci_high: Some(f.ci_high),
                flagged: f.flagged,
                note: None,
            },
            Err(flag) => RateRecord {
                seminorm: seminorm.to_string(),
                slope: None,
                residual: None,
                ci_low: None,
                ci_high: None,
                flagged: true,
                note: Some(flag.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRecord {
    pub m: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: SuiteName,
    pub verdict: Verdict,
    pub details: serde_json::Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<RateRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock time; printed, never written, so reports stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub cells: Vec<CsvCell>,
}

impl SuiteResult {
    pub fn new(suite: SuiteName, verdict: Verdict, details: serde_json::Value) -> Self {
        SuiteResult {
            suite,
            verdict,
            details,
            rates: Vec::new(),
            stability: None,
            error: None,
            elapsed: Duration::ZERO,
            cells: Vec::new(),
        }
    }

    /// A numerical failure recorded as a failing verdict.
    pub fn failed(suite: SuiteName, error: impl ToString) -> Self {
        let mut r = Self::new(suite, Verdict::Fail, serde_json::Value::Null);
        r.error = Some(error.to_string());
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifacts {
    pub csv: String,
    pub json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub suites: Vec<SuiteResult>,
    pub artifacts: Artifacts,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.suites.iter().all(|s| s.verdict == Verdict::Pass) {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        render_csv(self.suites.iter().flat_map(|s| &s.cells))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv<'a>(cells: impl IntoIterator<Item = &'a CsvCell>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        writeln!(out, "{},{},{},{:e}", csv_field(&c.seminorm), c.t, c.n, c.error).expect("write to string");
    }
    out
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Parses a CSV written by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvCell>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => return Err(format!("unexpected header {h:?}, want {CSV_HEADER:?}")),
        None => return Err("empty file".to_string()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let row = i + 2;
            let f = split_csv_line(line);
            if f.len() != 4 {
                return Err(format!("line {row}: expected 4 fields, found {}", f.len()));
            }
            let num = |k: usize, what: &str| -> Result<f64, String> {
                f[k].trim().parse().map_err(|_| format!("line {row}: invalid {what} {:?}", f[k]))
            };
            Ok(CsvCell {
                seminorm: f[0].clone(),
                t: num(1, "t")?,
                n: f[2].trim().parse().map_err(|_| format!("line {row}: invalid n {:?}", f[2]))?,
                error: num(3, "error")?,
            })
        })
        .collect()
}

/// Uniform-in-`t` errors of one seminorm and the rate fitted to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub seminorm: String,
    pub ns: Vec<u64>,
    pub uniform_errors: Vec<f64>,
    pub fit: Result<RateFit, RateFlag>,
}

/// One [`Refit`] per seminorm, in order of first appearance.
pub fn refit_rates(cells: &[CsvCell]) -> Vec<Refit> {
    let mut order: Vec<&str> = Vec::new();
    let mut by: BTreeMap<&str, BTreeMap<u64, f64>> = BTreeMap::new();
    for c in cells {
        if !by.contains_key(c.seminorm.as_str()) {
            order.push(&c.seminorm);
        }
        let slot = by.entry(&c.seminorm).or_default().entry(c.n).or_insert(0.0);
        *slot = slot.max(c.error);
    }
    order
        .into_iter()
        .map(|label| {
            let (ns, errs): (Vec<u64>, Vec<f64>) = by[label].iter().map(|(&n, &e)| (n, e)).unzip();
            let fit = fit_rate(&errs, &ns);
            Refit { seminorm: label.to_string(), ns, uniform_errors: errs, fit }
        })
        .collect()
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> KitResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| KitError::io(&dir, e))?;
    let name = path.file_name().ok_or_else(|| KitError::Format {
        path: path.to_path_buf(),
        message: "output path has no file name".to_string(),
    })?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents).map_err(|e| KitError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        KitError::io(path, e)
    })
}
