//! Output directory handling, CSV/JSON writers and the check ledger shared
//! by every subcommand.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes rows with a header taken from the serialized field names.
    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Writes a header and pre-formatted records.
    pub fn csv_records(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Renders a plot; failures are reported on stderr and otherwise ignored.
    pub fn plot(&self, name: &str, render: impl FnOnce(&Path) -> Result<()>) {
        let path = self.path(name);
        if let Err(e) = render(&path) {
            eprintln!("warning: plot {} not written: {e:#}", path.display());
        }
    }
}

/// One internal consistency check. A subcommand exits non-zero iff some
/// check fails.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Default)]
pub struct Checks {
    pub items: Vec<Check>,
}

impl Checks {
    /// Records `value <= tolerance`.
    pub fn at_most(&mut self, suite: &str, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        let pass = value <= tolerance;
        self.push(Check { suite: suite.into(), name: name.into(), pass, value, tolerance, detail: detail.into() });
    }

    pub fn holds(&mut self, suite: &str, name: &str, pass: bool, detail: impl Into<String>) {
        let value = if pass { 0.0 } else { 1.0 };
        self.push(Check { suite: suite.into(), name: name.into(), pass, value, tolerance: 0.0, detail: detail.into() });
    }

    /// Records a check whose evaluation itself failed.
    pub fn error(&mut self, suite: &str, name: &str, err: impl std::fmt::Display) {
        self.push(Check {
            suite: suite.into(),
            name: name.into(),
            pass: false,
            value: f64::NAN,
            tolerance: 0.0,
            detail: format!("error: {err}"),
        });
    }

    fn push(&mut self, c: Check) {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}.{}: {}", c.suite, c.name, c.detail);
        self.items.push(c);
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.items.iter().filter(|c| !c.pass).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|c| c.pass)
    }
}
