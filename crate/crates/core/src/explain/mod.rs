//! Gain importance for tree ensembles, interventional SHAP for every model
//! kind, and waterfall export.

pub mod shap;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureVector};
use crate::models::tree::TreeEnsemble;
use crate::seed;
pub use shap::{brute_force_shapley, shap_values, FnScorer, Scorer, ShapConfig, ShapExplanation};

pub const DEFAULT_BACKGROUND: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub column: usize,
    pub feature: String,
    pub importance: f64,
    pub n_splits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<ImportanceEntry>,
}

/// Mean recorded split gain per feature, descending (column order on ties).
/// Features that never split are omitted.
pub fn gain_importance(ensemble: &TreeEnsemble, names: &[String]) -> Result<ImportanceTable> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for t in &ensemble.trees {
        for (f, gain) in t.splits() {
            let e = acc.entry(f).or_insert((0.0, 0));
            e.0 += gain;
            e.1 += 1;
        }
    }
    let mut entries = acc
        .into_iter()
        .map(|(column, (sum, n))| {
            let feature = names
                .get(column)
                .ok_or(Error::DimensionMismatch {
                    expected: names.len(),
                    actual: column + 1,
                })?
                .clone();
            Ok(ImportanceEntry {
                column,
                feature,
                importance: sum / n as f64,
                n_splits: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.column.cmp(&b.column)));
    Ok(ImportanceTable { entries })
}

/// Seeded sample of up to `size` training rows, taken in id order.
pub fn background_rows(matrix: &DesignMatrix, size: usize, seed_: u64) -> Vec<FeatureVector> {
    let mut order: Vec<usize> = (0..matrix.len()).collect();
    if matrix.ids.len() == matrix.len() {
        order.sort_by(|&a, &b| matrix.ids[a].cmp(&matrix.ids[b]));
    }
    let take = size.min(order.len());
    let mut rng = seed::rng(seed::derive(seed_, &["background"]));
    let mut picked = index::sample(&mut rng, order.len(), take).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| matrix.rows[order[i]].clone()).collect()
}

pub const OTHER_FEATURES: &str = "other features";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallRecord {
    pub feature: String,
    /// The explained patient's value for this feature; absent on the
    /// folded remainder row.
    pub value: Option<f64>,
    pub contribution: f64,
    pub cumulative: f64,
}

/// Non-zero contributions by decreasing magnitude, cut at `top_k` with the
/// remainder folded into one row. Cumulative sums run from the base value
/// offset 0 to `prediction - base_value`.
pub fn export_waterfall(expl: &ShapExplanation, x: &FeatureVector, names: &[String], top_k: usize) -> Vec<WaterfallRecord> {
    let mut nonzero: Vec<(usize, f64)> = expl
        .contributions
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, c)| c != 0.0)
        .collect();
    nonzero.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    let rest: Vec<(usize, f64)> = if nonzero.len() > top_k {
        nonzero.split_off(top_k)
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    let mut cum = 0.0;
    for (c, v) in nonzero {
        cum += v;
        out.push(WaterfallRecord {
            feature: names.get(c).cloned().unwrap_or_else(|| format!("feature {c}")),
            value: Some(x.get(c)),
            contribution: v,
            cumulative: cum,
        });
    }
    if !rest.is_empty() || out.is_empty() {
        let other: f64 = rest.iter().map(|r| r.1).sum();
        cum += other;
        out.push(WaterfallRecord {
            feature: OTHER_FEATURES.to_string(),
            value: None,
            contribution: other,
            cumulative: cum,
        });
    }
    out
}

pub fn write_importance_csv(path: &Path, table: &ImportanceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "feature", "importance", "n_splits"])?;
    for (i, e) in table.entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.feature.clone(),
            format!("{:.9}", e.importance),
            e.n_splits.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_waterfall_csv(path: &Path, records: &[WaterfallRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "value", "contribution", "cumulative"])?;
    for r in records {
        w.write_record([
            r.feature.clone(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.12}", r.contribution),
            format!("{:.12}", r.cumulative),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
