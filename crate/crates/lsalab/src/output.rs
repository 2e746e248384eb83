//! Result rows and their CSV/JSON encodings.
//!
//! CSV columns are `experiment,<param keys>,empirical,std_err,oracle,bound,pass,seed`.
//! Floats are written with 17 significant digits; missing values are empty
//! fields. JSON carries the same rows under a run-metadata header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One parameter cell. Integers stay integers in both encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(u64),
    Num(f64),
    Text(String),
}

impl From<u64> for ParamValue {
    fn from(v: u64) -> Self {
        Self::Int(v)
    }
}

impl From<u32> for ParamValue {
    fn from(v: u32) -> Self {
        Self::Int(v.into())
    }
}

impl From<usize> for ParamValue {
    fn from(v: usize) -> Self {
        Self::Int(v as u64)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Keyed by the result set's `param_keys`; unused keys map to null.
    pub params: BTreeMap<String, Option<ParamValue>>,
    pub empirical: Option<f64>,
    pub std_err: Option<f64>,
    pub oracle: Option<f64>,
    pub bound: Option<f64>,
    pub pass: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Finite values only; anything else becomes `None` so both encodings
/// round-trip.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Builder for a row over a fixed key set.
#[derive(Debug, Clone)]
pub struct RowBuilder {
    row: ResultRow,
}

impl RowBuilder {
    pub fn new(keys: &[&str], seed: u64) -> Self {
        Self {
            row: ResultRow {
                params: keys.iter().map(|k| ((*k).to_owned(), None)).collect(),
                empirical: None,
                std_err: None,
                oracle: None,
                bound: None,
                pass: false,
                seed,
                note: None,
            },
        }
    }

    pub fn param(mut self, key: &str, v: impl Into<ParamValue>) -> Self {
        let slot = self
            .row
            .params
            .get_mut(key)
            .unwrap_or_else(|| panic!("parameter '{key}' not declared"));
        *slot = Some(v.into());
        self
    }

    pub fn empirical(mut self, v: f64) -> Self {
        self.row.empirical = finite(v);
        self
    }

    pub fn std_err(mut self, v: f64) -> Self {
        self.row.std_err = finite(v);
        self
    }

    pub fn oracle(mut self, v: f64) -> Self {
        self.row.oracle = finite(v);
        self
    }

    pub fn bound(mut self, v: f64) -> Self {
        self.row.bound = finite(v);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.row.note = Some(note.into());
        self
    }

    /// Finishes the row with its pass flag.
    pub fn pass(mut self, pass: bool) -> ResultRow {
        self.row.pass = pass;
        self.row
    }

    /// Records a per-row numerical failure: values stay empty and the row fails.
    pub fn failed(mut self, err: impl std::fmt::Display) -> ResultRow {
        self.row.note = Some(err.to_string());
        self.row.pass = false;
        self.row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub experiment: String,
    pub param_keys: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultSet {
    pub fn new(experiment: &str, keys: &[&str]) -> Self {
        Self {
            experiment: experiment.to_owned(),
            param_keys: keys.iter().map(|k| (*k).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Rows whose `metric` parameter equals `metric`.
    pub fn metric<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| matches!(r.params.get("metric"), Some(Some(ParamValue::Text(m))) if m == metric))
    }
}

impl ResultRow {
    pub fn num(&self, key: &str) -> Option<f64> {
        match self.params.get(key)? {
            Some(ParamValue::Num(v)) => Some(*v),
            Some(ParamValue::Int(v)) => Some(*v as f64),
            _ => None,
        }
    }
}

fn fmt_float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:.16e}").expect("write to string");
    }
}

fn fmt_param(out: &mut String, v: &Option<ParamValue>) {
    match v {
        None => {}
        Some(ParamValue::Int(i)) => write!(out, "{i}").expect("write to string"),
        Some(ParamValue::Num(x)) => fmt_float(out, Some(*x)),
        Some(ParamValue::Text(s)) => out.push_str(s),
    }
}

pub fn to_csv(set: &ResultSet) -> String {
    let mut out = String::from("experiment");
    for k in &set.param_keys {
        out.push(',');
        out.push_str(k);
    }
    out.push_str(",empirical,std_err,oracle,bound,pass,seed\n");
    for row in &set.rows {
        out.push_str(&set.experiment);
        for k in &set.param_keys {
            out.push(',');
            fmt_param(&mut out, row.params.get(k).unwrap_or(&None));
        }
        for v in [row.empirical, row.std_err, row.oracle, row.bound] {
            out.push(',');
            fmt_float(&mut out, v);
        }
        writeln!(out, ",{},{}", row.pass, row.seed).expect("write to string");
    }
    out
}

/// Run metadata carried in the JSON header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonDocument {
    pub meta: RunMeta,
    #[serde(flatten)]
    pub results: ResultSet,
}

pub fn to_json(set: &ResultSet, meta: &RunMeta) -> String {
    let doc = JsonDocument {
        meta: meta.clone(),
        results: set.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("result rows serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> serde_json::Result<JsonDocument> {
    serde_json::from_str(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

/// Writes `<base>.csv` and/or `<base>.json`, creating parent directories.
pub fn emit(set: &ResultSet, meta: &RunMeta, base: &Path, format: Format) -> Result<Vec<PathBuf>, EmitError> {
    let mut written = Vec::new();
    let targets: &[(&str, bool)] = &[
        ("csv", matches!(format, Format::Csv | Format::Both)),
        ("json", matches!(format, Format::Json | Format::Both)),
    ];
    for &(ext, wanted) in targets {
        if !wanted {
            continue;
        }
        let path = base.with_extension(ext);
        let body = if ext == "csv" { to_csv(set) } else { to_json(set, meta) };
        let io = |source| EmitError {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(&path, body).map_err(io)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultSet {
        let keys = ["alpha", "n", "metric"];
        let mut set = ResultSet::new("demo", &keys);
        set.rows.push(
            RowBuilder::new(&keys, 7)
                .param("alpha", 0.1)
                .param("n", 10u64)
                .param("metric", "m")
                .empirical(1.0 / 3.0)
                .std_err(0.01)
                .pass(true),
        );
        set.rows.push(
            RowBuilder::new(&keys, 7)
                .param("metric", "m")
                .bound(f64::NAN)
                .failed("blow-up"),
        );
        set
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&sample());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "experiment,alpha,n,metric,empirical,std_err,oracle,bound,pass,seed"
        );
        assert_eq!(
            lines[1],
            "demo,1.0000000000000001e-1,10,m,3.3333333333333331e-1,1.0000000000000000e-2,,,true,7"
        );
        assert_eq!(lines[2], "demo,,,m,,,,,false,7");
        let widths: Vec<usize> = lines.iter().map(|l| l.split(',').count()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789] {
            let mut s = String::new();
            fmt_float(&mut s, Some(v));
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let meta = RunMeta {
            version: "0".into(),
            config_hash: "h".into(),
            wall_time_s: 1.5,
        };
        let text = to_json(&sample(), &meta);
        let doc = from_json(&text).unwrap();
        assert_eq!(to_json(&doc.results, &doc.meta), text);
    }

    #[test]
    fn empty_set_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let set = ResultSet::new("demo", &["alpha"]);
        let meta = RunMeta {
            version: "0".into(),
            config_hash: "h".into(),
            wall_time_s: 0.0,
        };
        let paths = emit(&set, &meta, &dir.path().join("sub/out"), Format::Both).unwrap();
        assert_eq!(paths.len(), 2);
        let csv = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(csv, "experiment,alpha,empirical,std_err,oracle,bound,pass,seed\n");
        let doc = from_json(&std::fs::read_to_string(&paths[1]).unwrap()).unwrap();
        assert!(doc.results.rows.is_empty());
    }
}
