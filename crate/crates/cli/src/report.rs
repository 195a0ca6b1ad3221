//! Structured reports and their JSON / CSV renderings.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One named value. `params` holds the row's own coordinates in scans.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub name: String,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    pub value: f64,
    pub error_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl Entry {
    pub fn new(name: impl Into<String>, value: f64, error_estimate: f64) -> Self {
        Entry {
            name: name.into(),
            params: Map::new(),
            value,
            error_estimate,
            samples: None,
            converged: None,
            pass: None,
        }
    }

    /// A closed-form or exactly counted value: the estimate is a few ulps.
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Entry::new(name, value, 4.0 * f64::EPSILON * value.abs())
    }

    pub fn param(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }

    pub fn samples(mut self, n: u64) -> Self {
        self.samples = Some(n);
        self
    }

    pub fn converged(mut self, c: bool) -> Self {
        self.converged = Some(c);
        self
    }

    pub fn pass(mut self, p: bool) -> Self {
        self.pass = Some(p);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub timestamp: String,
    pub inputs: Value,
    pub results: Vec<Entry>,
    pub pass_fail: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    pub fn new(command: &str, inputs: Value) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            inputs,
            results: Vec::new(),
            pass_fail: None,
            error: None,
        }
    }

    pub fn push(&mut self, e: Entry) {
        self.results.push(e);
    }

    pub fn verdict(&mut self, ok: bool) {
        self.pass_fail = Some(Verdict::from_bool(ok));
    }

    pub fn write_json(&self, out: &mut dyn Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        writeln!(out)?;
        Ok(())
    }

    /// Columns: `name`, the union of row parameters in first-seen order,
    /// then `value`, `error_estimate`, `pass`.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut keys: Vec<&str> = Vec::new();
        for e in &self.results {
            for k in e.params.keys() {
                if !keys.contains(&k.as_str()) {
                    keys.push(k);
                }
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["name"];
        header.extend(&keys);
        header.extend(["value", "error_estimate", "pass"]);
        w.write_record(&header)?;
        for e in &self.results {
            let mut row = vec![e.name.clone()];
            for k in &keys {
                row.push(e.params.get(*k).map(cell).unwrap_or_default());
            }
            row.push(format!("{:?}", e.value));
            row.push(format!("{:?}", e.error_estimate));
            let pass = e.pass.or(self.pass_fail.map(|v| v == Verdict::Pass));
            row.push(pass.map(|p| p.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
