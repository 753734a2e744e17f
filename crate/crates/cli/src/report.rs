//! Report containers and the two emission formats: an RFC-style CSV table and
//! a line-delimited structured-record stream. Every report embeds a hash of
//! its resolved configuration; the optional timestamp is excluded from both
//! the hash and determinism comparisons.

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Records,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellValue {
    pub value: f64,
    /// replication count behind the cell; None marks an analytic cell
    pub replications: Option<usize>,
    pub failures: usize,
    /// more than 1% of replications failed
    pub unreliable: bool,
}

impl CellValue {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            replications: None,
            failures: 0,
            unreliable: false,
        }
    }

    pub fn simulated(value: f64, replications: usize, failures: usize) -> Self {
        Self {
            value,
            replications: Some(replications),
            failures,
            unreliable: failures * 100 > replications,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub runtime_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportTable {
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<CellValue>>,
    pub meta: ReportMeta,
}

impl ReportTable {
    pub fn cell(&self, r: usize, c: usize) -> &CellValue {
        &self.cells[r][c]
    }

    /// CSV: header row, one row per row-label, trailing `_meta` rows carrying
    /// the configuration hash and seed (timestamp deliberately omitted so that
    /// identical invocations are byte-identical).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = vec![self.row_label.clone()];
        line.extend(self.col_labels.iter().cloned());
        writeln!(w, "{}", line.join(","))?;
        for (rl, row) in self.row_labels.iter().zip(&self.cells) {
            let mut fields = vec![rl.clone()];
            for c in row {
                let mut s = format_float(c.value);
                if c.unreliable {
                    s.push_str(" (unreliable)");
                }
                fields.push(s);
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        writeln!(w, "_meta,config_hash,{}", self.meta.config_hash)?;
        if let Some(seed) = self.meta.seed {
            writeln!(w, "_meta,seed,{seed}")?;
        }
        Ok(())
    }

    /// Line-delimited records: a meta record followed by one record per cell.
    /// Wall-clock fields (timestamp, runtime) are emitted only when a
    /// timestamp was attached, so seeded reruns stay byte-identical.
    pub fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        let mut meta = serde_json::json!({
            "type": "meta",
            "title": self.title,
            "seed": self.meta.seed,
            "config_hash": self.meta.config_hash,
        });
        if let Some(ts) = &self.meta.timestamp {
            meta["timestamp"] = serde_json::json!(ts);
            meta["runtime_ms"] = serde_json::json!(self.meta.runtime_ms);
        }
        writeln!(w, "{meta}")?;
        for (r, rl) in self.row_labels.iter().enumerate() {
            for (c, cl) in self.col_labels.iter().enumerate() {
                let cell = &self.cells[r][c];
                let rec = serde_json::json!({
                    "type": "cell",
                    self.row_label.clone(): rl,
                    self.col_label.clone(): cl,
                    "value": cell.value,
                    "replications": cell.replications,
                    "failures": cell.failures,
                    "unreliable": cell.unreliable,
                });
                writeln!(w, "{rec}")?;
            }
        }
        Ok(())
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        let mut buf = Vec::new();
        match format {
            OutputFormat::Csv => self.write_csv(&mut buf)?,
            OutputFormat::Records => self.write_records(&mut buf)?,
        }
        Ok(String::from_utf8(buf)?)
    }
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// SHA-256 over the serialized configuration; field order is fixed by the
/// struct definitions, so the hash is stable across runs.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex::encode(hasher.finalize())
}

/// Serialize any record for the structured-record output, dropping nothing.
pub fn record_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ReportTable {
        ReportTable {
            title: "t".into(),
            row_label: "beta".into(),
            col_label: "gamma".into(),
            row_labels: vec!["0.1".into()],
            col_labels: vec!["0".into(), "0.01".into()],
            cells: vec![vec![
                CellValue::analytic(98.8),
                CellValue::simulated(0.0281, 1000, 0),
            ]],
            meta: ReportMeta {
                seed: Some(7),
                config_hash: "abc".into(),
                runtime_ms: 5,
                timestamp: None,
            },
        }
    }

    #[test]
    fn csv_shape_and_meta_rows() {
        let s = table().render(OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "beta,0,0.01");
        assert!(lines[1].starts_with("0.1,98.8,"));
        assert!(lines.iter().any(|l| l.starts_with("_meta,config_hash,")));
        assert!(lines.iter().any(|l| l.starts_with("_meta,seed,7")));
    }

    #[test]
    fn records_first_line_is_meta() {
        let s = table().render(OutputFormat::Records).unwrap();
        let first: serde_json::Value = serde_json::from_str(s.lines().next().unwrap()).unwrap();
        assert_eq!(first["type"], "meta");
        assert_eq!(s.lines().count(), 3);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        assert_eq!(config_hash(&C { a: 1 }), config_hash(&C { a: 1 }));
        assert_ne!(config_hash(&C { a: 1 }), config_hash(&C { a: 2 }));
    }
}
