//! Bundled case-study datasets with load-time row-count validation.

use anyhow::{bail, Context, Result};

use crate::ingest::{parse_csv, Dataset};

pub const NEWCOMB: &str = include_str!("../data/newcomb.csv");
pub const SHORT: &str = include_str!("../data/short.csv");
pub const HERTZSPRUNG_RUSSELL: &str = include_str!("../data/hertzsprung_russell.csv");
pub const SALINITY: &str = include_str!("../data/salinity.csv");
pub const MOSQUITO: &str = include_str!("../data/mosquito.csv");
pub const PROVENANCE: &str = include_str!("../data/PROVENANCE.md");

pub const NAMES: [&str; 5] = [
    "newcomb",
    "short",
    "hertzsprung-russel",
    "salinity",
    "mosquito",
];

fn expected_rows(name: &str) -> Option<usize> {
    match name {
        "newcomb" => Some(66),
        "short" => Some(53),
        "hertzsprung-russel" => Some(47),
        "salinity" => Some(28),
        "mosquito" => Some(2),
        _ => None,
    }
}

fn raw(name: &str) -> Option<&'static str> {
    match name {
        "newcomb" => Some(NEWCOMB),
        "short" => Some(SHORT),
        "hertzsprung-russel" => Some(HERTZSPRUNG_RUSSELL),
        "salinity" => Some(SALINITY),
        "mosquito" => Some(MOSQUITO),
        _ => None,
    }
}

/// Load a bundled dataset by name, validating the expected row count.
pub fn load(name: &str) -> Result<Dataset> {
    let text = raw(name).with_context(|| {
        format!(
            "unknown dataset '{name}'; bundled datasets: {}",
            NAMES.join(", ")
        )
    })?;
    let ds = parse_csv(name, text)?;
    let want = expected_rows(name).expect("known name");
    if ds.rows() != want {
        bail!(
            "bundled dataset '{name}' has {} rows, expected {want}",
            ds.rows()
        );
    }
    Ok(ds)
}

/// Validate a user-supplied replacement for a bundled dataset.
pub fn validate_replacement(name: &str, ds: &Dataset) -> Result<()> {
    if let Some(want) = expected_rows(name) {
        if ds.rows() != want {
            bail!(
                "dataset '{name}' must have {want} rows (got {}); see data/PROVENANCE.md",
                ds.rows()
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_row_counts() {
        assert_eq!(load("newcomb").unwrap().rows(), 66);
        assert_eq!(load("short").unwrap().rows(), 53);
        assert_eq!(load("hertzsprung-russel").unwrap().rows(), 47);
        assert_eq!(load("salinity").unwrap().rows(), 28);
        assert_eq!(load("mosquito").unwrap().rows(), 2);
        assert!(load("nope").is_err());
    }

    #[test]
    fn newcomb_mle_matches_published_values() {
        let ds = load("newcomb").unwrap();
        let v = ds.column("value").unwrap();
        let n = v.len() as f64;
        let mean: f64 = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        assert!((mean - 26.212).abs() < 0.001, "mean {mean}");
        assert!((sd - 10.664).abs() < 0.001, "sd {sd}");
    }
}
