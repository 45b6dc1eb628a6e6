//! Columnar artifacts, run summaries and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // Shortest round-trip form, exponent notation for tiny/huge values.
            Cell::Float(v) => write!(f, "{v:?}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// One CSV table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Artifact {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| LabError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))
                .map_err(io)?;
        }
        w.into_inner().map_err(|e| LabError::Io(e.to_string()))
    }

    /// Column values as f64 where numeric.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Int(v) => *v as f64,
                    Cell::Float(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of one run, written as `summary.json` and `summary.txt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    /// Error name and message for numerical failures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub notes: Vec<String>,
    /// Structured payload kept out of the text summary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl Summary {
    pub fn new(experiment: &str, seed: u64, parameters: serde_json::Value) -> Self {
        Summary {
            experiment: experiment.to_string(),
            seed,
            parameters,
            metrics: BTreeMap::new(),
            assertions: Vec::new(),
            error: None,
            notes: Vec::new(),
            details: None,
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("experiment: {}\nseed: {}\n", self.experiment, self.seed);
        if let Some(e) = &self.error {
            s.push_str(&format!("error: {e}\n"));
        }
        for (k, v) in &self.metrics {
            s.push_str(&format!("{k} = {v:?}\n"));
        }
        for a in &self.assertions {
            let mark = if a.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("[{mark}] {}: {}\n", a.name, a.detail));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub files: Vec<ManifestEntry>,
}

/// Writes each artifact as CSV plus `manifest.json` into `dir`, in order.
pub fn emit_report(dir: &Path, experiment: &str, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    if artifacts.is_empty() {
        return Err(LabError::MissingArtifact);
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(artifacts.len() + 1);
    let mut files = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(a.file_name());
        fs::write(&path, a.to_csv()?)?;
        files.push(ManifestEntry {
            file: a.file_name(),
            columns: a.columns.clone(),
            rows: a.rows.len(),
        });
        written.push(path);
    }
    let manifest = Manifest {
        experiment: experiment.to_string(),
        files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, to_json(&manifest)?)?;
    written.push(path);
    Ok(written)
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), to_json(summary)?)?;
    fs::write(dir.join("summary.txt"), summary.to_text())?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| LabError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting_and_floats() {
        let mut a = Artifact::new("t", &["label", "x"]);
        a.push(vec!["a,b".into(), 0.1.into()]);
        a.push(vec!["plain".into(), 1e-300.into()]);
        let text = String::from_utf8(a.to_csv().unwrap()).unwrap();
        assert_eq!(text, "label,x\n\"a,b\",0.1\nplain,1e-300\n");
    }

    #[test]
    fn empty_artifacts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            emit_report(dir.path(), "x", &[]).unwrap_err(),
            LabError::MissingArtifact
        );
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifact::new("trajectory", &["n", "estimate"]);
        a.push(vec![1usize.into(), 0.5.into()]);
        let paths = emit_report(dir.path(), "spectrum", &[a]).unwrap();
        assert_eq!(paths.len(), 2);
        let m = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(m.contains("trajectory.csv"));
    }
}
