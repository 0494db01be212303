//! CSV tables with a schema line, and the run manifest.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Version of every CSV layout written by this binary.
pub const SCHEMA_VERSION: u32 = 1;

/// Hash of the library and CLI sources this binary was built from.
pub const CODE_HASH: &str = env!("BOSECYCLES_CODE_HASH");

pub struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

/// Shortest round-trip representation; empty for missing values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self { name, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut file = File::create(&path)?;
        writeln!(file, "# schema: bosecycles/{}/v{SCHEMA_VERSION}", self.name)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize, S: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub code_hash: &'a str,
    pub schema_version: u32,
    pub config_sha256: String,
    pub config: &'a C,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    pub summary: S,
}

pub fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(file)?;
    Ok(())
}
