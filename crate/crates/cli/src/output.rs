//! Command outcomes: a human-readable table on stdout and machine formats
//! stamped with the tool version and config hash.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{Format, RunConfig, TOOL_VERSION};
use crate::error::CliError;

/// Rows beyond this are elided from the human table.
pub const TABLE_LIMIT: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    /// Key facts printed above the table.
    pub summary: Vec<(String, String)>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Structured results for JSON output.
    pub data: Value,
}

impl Outcome {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            passed: true,
            summary: Vec::new(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            data: Value::Null,
        }
    }

    pub fn fact(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    /// Aligned plain-text rendering.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(out, "{k}: {v}");
        }
        if !self.headers.is_empty() {
            let cols = self.headers.len();
            let mut width: Vec<usize> = self.headers.iter().map(String::len).collect();
            for r in &self.rows {
                for (i, c) in r.iter().enumerate().take(cols) {
                    width[i] = width[i].max(c.len());
                }
            }
            let line = |cells: &[String]| -> String {
                let parts: Vec<String> = cells.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = width[i])).collect();
                parts.join("  ").trim_end().to_string()
            };
            let _ = writeln!(out, "{}", line(&self.headers));
            let shown = if self.rows.len() > TABLE_LIMIT { TABLE_LIMIT / 2 } else { self.rows.len() };
            for r in &self.rows[..shown] {
                let _ = writeln!(out, "{}", line(r));
            }
            if shown < self.rows.len() {
                let _ = writeln!(out, "... {} more rows (use --out for all)", self.rows.len() - shown);
            }
        }
        let _ = writeln!(out, "result: {}", if self.passed { "pass" } else { "fail" });
        out
    }

    pub fn to_json(&self, config: &RunConfig) -> String {
        let doc = json!({
            "tool": TOOL_VERSION,
            "config_hash": config.hash(),
            "command": config.command.map(|c| c.as_str()),
            "config": serde_json::from_str::<Value>(&config.canonical_json()).expect("canonical json parses"),
            "passed": self.passed,
            "summary": self.summary.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
            "results": self.data,
        });
        serde_json::to_string_pretty(&doc).expect("json output") + "\n"
    }

    pub fn to_csv(&self, config: &RunConfig) -> Result<String, CliError> {
        let mut head = String::new();
        let _ = writeln!(head, "# tool: {TOOL_VERSION}");
        let _ = writeln!(head, "# config_hash: {}", config.hash());
        if let Some(c) = config.command {
            let _ = writeln!(head, "# command: {}", c.as_str());
        }
        for (k, v) in &self.summary {
            let _ = writeln!(head, "# {k}: {v}");
        }
        let _ = writeln!(head, "# passed: {}", self.passed);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        Ok(head + &String::from_utf8(body).expect("csv is utf-8"))
    }

    pub fn write(&self, config: &RunConfig, path: &Path) -> Result<(), CliError> {
        let text = match config.format {
            Format::Json => self.to_json(config),
            Format::Csv => self.to_csv(config)?,
        };
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Shortest round-trip rendering; stable across runs.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Fixed six-decimal rendering for the human table.
pub fn fix(x: f64) -> String {
    format!("{x:.6}")
}

pub fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Outcome {
        let mut o = Outcome::new(&["a", "b"]);
        o.fact("seed", 3);
        o.row(vec!["1".into(), "x,y".into()]);
        o.data = json!({"k": 1.5});
        o
    }

    #[test]
    fn files_carry_version_and_hash() {
        let c = RunConfig::default();
        let o = sample();
        let j = o.to_json(&c);
        assert!(j.contains(TOOL_VERSION) && j.contains(&c.hash()));
        let v: Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["results"]["k"], 1.5);
        let csv = o.to_csv(&c).unwrap();
        assert!(csv.starts_with(&format!("# tool: {TOOL_VERSION}\n# config_hash: {}", c.hash())));
        assert!(csv.contains("\"x,y\""));
    }

    #[test]
    fn table_is_aligned() {
        let t = sample().render_table();
        assert!(t.contains("seed: 3"));
        assert!(t.ends_with("result: pass\n"));
    }
}
