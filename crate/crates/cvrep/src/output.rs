//! Result tables: CSV with a `#` header block plus a JSON sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cvrep_core::metrics::PHYSICALITY_TOL;

use crate::config::{hex, ExperimentConfig};
use crate::error::{RunError, RunResult};

pub const SCHEMA_VERSION: &str = "cvrep-table/1";

/// What the physicality gate checks for a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Finite,
    /// Finite and in `[0, 1]`.
    Probability,
    /// Finite and `>= 0`.
    NonNegative,
    /// Symplectic eigenvalue, `>= 1 - tol`.
    Symplectic,
    /// Free text.
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: &'static str,
    pub check: Check,
}

pub fn col(name: impl Into<String>, unit: &'static str, check: Check) -> Column {
    Column {
        name: name.into(),
        unit,
        check,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    F(f64),
    I(i64),
    S(String),
}

impl Value {
    fn render(&self, out: &mut String) {
        match self {
            // shortest round-trip representation
            Value::F(x) => write!(out, "{x:e}").unwrap(),
            Value::I(i) => write!(out, "{i}").unwrap(),
            Value::S(s) => out.push_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::F(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::I(x as i64)
    }
}

impl From<u32> for Value {
    fn from(x: u32) -> Self {
        Value::I(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::I(x as i64)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::S(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
    /// Per-row diagnostics for the sidecar (optimizer traces and the like).
    pub diagnostics: Vec<serde_json::Value>,
    /// Rows whose optimizer or quadrature did not converge.
    pub unconverged: Vec<usize>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            diagnostics: Vec::new(),
            unconverged: Vec::new(),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|r| match r[i] {
                Value::F(x) => Some(x),
                Value::I(x) => Some(x as f64),
                Value::S(_) => None,
            })
            .collect()
    }

    /// Every row must satisfy every column check before anything is written.
    pub fn gate(&self) -> RunResult<()> {
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(RunError::Physicality(format!(
                    "row {r} has {} cells for {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
            for (c, v) in self.columns.iter().zip(row) {
                let bad = |why: &str| {
                    Err(RunError::Physicality(format!(
                        "row {r}, column {}: {v:?} {why}",
                        c.name
                    )))
                };
                let x = match v {
                    Value::F(x) => *x,
                    Value::I(i) => *i as f64,
                    Value::S(_) if c.check == Check::Text => continue,
                    Value::S(_) => return bad("is text in a numeric column"),
                };
                if !x.is_finite() {
                    return bad("is not finite");
                }
                match c.check {
                    Check::Probability if !(0.0..=1.0).contains(&x) => {
                        return bad("is not a probability")
                    }
                    Check::NonNegative if x < 0.0 => return bad("is negative"),
                    Check::Symplectic if x < 1.0 - PHYSICALITY_TOL => {
                        return bad("violates the uncertainty principle")
                    }
                    Check::Text => return bad("is numeric in a text column"),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self, cfg: &ExperimentConfig) -> String {
        let mut s = String::new();
        writeln!(s, "# schema: {SCHEMA_VERSION}").unwrap();
        writeln!(s, "# experiment: {}", cfg.experiment.name()).unwrap();
        writeln!(s, "# config_sha256: {}", cfg.hash()).unwrap();
        let units: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}[{}]", c.name, c.unit))
            .collect();
        writeln!(s, "# units: {}", units.join(",")).unwrap();
        writeln!(
            s,
            "# note: key rates and EOF are computed from the Gaussian covariance matrix of the output state"
        )
        .unwrap();
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(s, "{}", names.join(",")).unwrap();
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                v.render(&mut s);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    schema: &'static str,
    experiment: &'static str,
    config: &'a ExperimentConfig,
    config_sha256: String,
    content_sha256: String,
    rows: usize,
    columns: &'a [Column],
    unconverged_rows: &'a [usize],
    diagnostics: &'a [serde_json::Value],
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Gates the table, then writes the CSV and its sidecar. Returns the CSV
/// content hash.
pub fn write_outputs(table: &Table, cfg: &ExperimentConfig) -> RunResult<String> {
    table.gate()?;
    let csv = table.to_csv(cfg);
    let content = hex(&Sha256::digest(csv.as_bytes()));
    let side = Sidecar {
        schema: SCHEMA_VERSION,
        experiment: cfg.experiment.name(),
        config: cfg,
        config_sha256: cfg.hash(),
        content_sha256: content.clone(),
        rows: table.rows.len(),
        columns: &table.columns,
        unconverged_rows: &table.unconverged,
        diagnostics: &table.diagnostics,
    };
    if let Some(dir) = cfg.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&cfg.out, &csv)?;
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    std::fs::write(sidecar_path(&cfg.out), json + "\n")?;
    Ok(content)
}
