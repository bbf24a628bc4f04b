//! Deterministic result emission: CSV tables with 17 significant digits and
//! a structured text summary with one PASS/FAIL line per assertion.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Format a number with 17 significant digits, deterministically.
pub fn g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Buffered CSV writer with a fixed header.
pub struct CsvTable {
    path: PathBuf,
    buffer: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(dir: &Path, name: &str, header: &[&str]) -> Self {
        let mut buffer = String::new();
        buffer.push_str(&header.join(","));
        buffer.push('\n');
        CsvTable { path: dir.join(name), buffer, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width mismatch");
        self.buffer.push_str(&cells.join(","));
        self.buffer.push('\n');
    }

    pub fn row_values(&mut self, label: &str, values: &[f64]) {
        let mut cells = Vec::with_capacity(values.len() + 1);
        cells.push(label.to_string());
        cells.extend(values.iter().map(|v| g17(*v)));
        self.row(&cells);
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        fs::write(&self.path, self.buffer.as_bytes())
            .with_context(|| format!("writing {}", self.path.display()))?;
        Ok(self.path)
    }
}

/// Accumulates assertion outcomes and renders the summary.
#[derive(Default)]
pub struct Summary {
    lines: Vec<String>,
    failures: usize,
}

impl Summary {
    pub fn assert(&mut self, name: &str, pass: bool, detail: &str) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        if !pass {
            self.failures += 1;
        }
        self.lines.push(format!("{verdict} {name} {detail}"));
    }

    pub fn assert_le(&mut self, name: &str, value: f64, tol: f64) {
        self.assert(
            name,
            value <= tol,
            &format!("value={} tol={}", g17(value), g17(tol)),
        );
    }

    pub fn info(&mut self, name: &str, detail: &str) {
        self.lines.push(format!("INFO {name} {detail}"));
    }

    pub fn all_passed(&self) -> bool {
        self.failures == 0
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            writeln!(out, "{line}").unwrap();
        }
        writeln!(
            out,
            "{} ({} assertions, {} failed)",
            if self.all_passed() { "ALL PASS" } else { "FAILURES" },
            self.lines.iter().filter(|l| !l.starts_with("INFO")).count(),
            self.failures
        )
        .unwrap();
        out
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let text = self.render();
        fs::write(dir.join("summary.txt"), text.as_bytes()).context("writing summary")?;
        Ok(())
    }
}
