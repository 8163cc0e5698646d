//! Tables written as CSV with a one-line metadata preamble.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named table of pre-formatted cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem, e.g. `reduce` for `reduce.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Key/value summary table.
    pub fn summary(name: impl Into<String>, pairs: Vec<(&str, String)>) -> Self {
        let mut t = Table::new(name, &["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v]);
        }
        t
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|r| r[0] == key).map(|r| r[1].as_str())
    }
}

/// Shortest round-trip representation, so equal values print identically.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn preamble(seed: u64, config_hash: &str) -> String {
    format!("# version={VERSION}, seed={seed}, config_hash={config_hash}")
}

pub fn render(table: &Table, preamble: &str) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    writeln!(buf, "{preamble}").map_err(|e| CliError::Output(e.to_string()))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.header)
            .map_err(|e| CliError::Output(e.to_string()))?;
        for row in &table.rows {
            w.write_record(row).map_err(|e| CliError::Output(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok(buf)
}

pub fn write_tables(dir: &Path, tables: &[Table], preamble: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, render(t, preamble)?).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preamble_then_header() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![num(0.1), "y,z".into()]);
        let text = String::from_utf8(render(&t, &preamble(7, "abc")).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# version={VERSION}, seed=7, config_hash=abc"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1e-1,\"y,z\"");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
