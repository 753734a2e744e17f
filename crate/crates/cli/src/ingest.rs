//! Strict CSV ingestion: header row required, every cell numeric, no ragged
//! rows; parse failures carry the 1-based line number.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<(String, Vec<f64>)>,
    pub provenance: Option<String>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Parse CSV text into typed columns.
pub fn parse_csv(name: &str, text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .context("missing header row")?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if headers.is_empty() || headers.iter().any(|h| h.is_empty()) {
        bail!("header row must name every column");
    }
    let mut columns: Vec<(String, Vec<f64>)> =
        headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.with_context(|| format!("line {line}: malformed CSV"))?;
        if record.len() != headers.len() {
            bail!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            );
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .with_context(|| format!("line {line}: non-numeric cell '{field}'"))?;
            if !v.is_finite() {
                bail!("line {line}: non-finite cell '{field}'");
            }
            columns[j].1.push(v);
        }
    }
    if columns[0].1.is_empty() {
        bail!("no data rows");
    }
    Ok(Dataset {
        name: name.to_string(),
        columns,
        provenance: None,
    })
}

/// Read and strictly parse a CSV file.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    parse_csv(&name, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_columns() {
        let ds = parse_csv("t", "a,b\n1,2.5\n3,4.5\n").unwrap();
        assert_eq!(ds.rows(), 2);
        assert_eq!(ds.column("a").unwrap(), &[1.0, 3.0]);
        assert_eq!(ds.column("b").unwrap(), &[2.5, 4.5]);
    }

    #[test]
    fn rejects_bad_cells_with_line_numbers() {
        let err = parse_csv("t", "a\n1\nxyz\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3"), "{msg}");
        // ragged row
        let err = parse_csv("t", "a,b\n1,2\n3\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"));
    }

    #[test]
    fn rejects_empty_input() {
        assert!(parse_csv("t", "").is_err());
        assert!(parse_csv("t", "a,b\n").is_err());
    }
}
