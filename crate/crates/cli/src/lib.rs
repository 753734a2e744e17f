//! Harness library behind the `lphidpd` command-line tool: dataset bundling
//! and ingestion, report containers, simulation/table generators, and the
//! bundled case studies.

pub mod cases;
pub mod datasets;
pub mod harness;
pub mod ingest;
pub mod report;
