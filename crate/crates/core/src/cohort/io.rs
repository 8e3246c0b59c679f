//! JSON Lines persistence for cohorts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Label, PatientRecord, SyntheticCohortConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCounts {
    pub patients: usize,
    pub crc: usize,
    pub non_crc: usize,
}

impl CohortCounts {
    pub fn of(patients: &[PatientRecord]) -> Self {
        let crc = patients.iter().filter(|p| p.label == Label::CRC).count();
        CohortCounts {
            patients: patients.len(),
            crc,
            non_crc: patients.len() - crc,
        }
    }
}

/// Companion metadata written next to a cohort file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetadata {
    /// Generator settings, absent for cohorts read from a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SyntheticCohortConfig>,
    pub seed: u64,
    pub counts: CohortCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_cohort(path: &Path, patients: &[PatientRecord]) -> Result<()> {
    write_jsonl(path, patients)
}

/// Reads a cohort, re-sorting each patient's events and validating them.
pub fn read_cohort(path: &Path) -> Result<Vec<PatientRecord>> {
    let mut patients: Vec<PatientRecord> = read_jsonl(path)?;
    for p in &mut patients {
        p.normalize()?;
    }
    Ok(patients)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
