//! Design matrices on disk: a JSON manifest of ordered feature names plus
//! JSON Lines rows `{"id": .., "label": 0|1, "x": [[col, value], ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DesignMatrix, FeatureSpace, FeatureVector};
use crate::cohort::io::{read_jsonl, write_jsonl};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub label: u8,
    pub x: Vec<(usize, f64)>,
}

pub fn write_design_matrix(rows_path: &Path, matrix: &DesignMatrix) -> Result<()> {
    let rows: Vec<SparseRow> = matrix
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| SparseRow {
            id: matrix.ids.get(i).cloned().unwrap_or_default(),
            label: matrix.labels[i],
            x: r.entries().to_vec(),
        })
        .collect();
    write_jsonl(rows_path, &rows)
}

pub fn read_design_matrix(rows_path: &Path, space: &FeatureSpace) -> Result<DesignMatrix> {
    let rows: Vec<SparseRow> = read_jsonl(rows_path)?;
    let mut vectors = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut ids = Vec::with_capacity(rows.len());
    for r in rows {
        vectors.push(FeatureVector::new(space.dim(), r.x)?);
        labels.push(r.label);
        ids.push(r.id);
    }
    if ids.iter().all(String::is_empty) {
        ids.clear();
    }
    DesignMatrix::new(vectors, labels, ids, space.clone())
}
