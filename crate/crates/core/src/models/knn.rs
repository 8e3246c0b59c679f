//! Brute-force k-nearest neighbours on standardized features.

use serde::{Deserialize, Serialize};

use super::hyper::Hyperparams;
use crate::error::{Error, Result};
use crate::features::{FeatureStats, STD_FLOOR};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

/// Stores the full training matrix in canonical row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub metric: Metric,
    pub stats: FeatureStats,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<u8>,
}

pub fn fit(rows: &[&FeatureVector], labels: &[u8], stats: FeatureStats, h: &Hyperparams) -> Result<KnnModel> {
    let k = h.usize_or("k", 5)?;
    if k == 0 {
        return Err(Error::Config("`k` must be at least 1".into()));
    }
    let metric = match h.str_or("metric", "euclidean")? {
        "euclidean" => Metric::Euclidean,
        "manhattan" => Metric::Manhattan,
        other => return Err(Error::Config(format!("unknown metric `{other}`"))),
    };
    Ok(KnnModel {
        k,
        metric,
        stats,
        rows: rows.iter().map(|r| (*r).clone()).collect(),
        labels: labels.to_vec(),
    })
}

impl KnnModel {
    fn scale(&self, j: usize) -> f64 {
        if self.stats.one_hot[j] {
            1.0
        } else if self.stats.sd[j] <= STD_FLOOR {
            0.0
        } else {
            1.0 / self.stats.sd[j]
        }
    }

    /// Distance in standardized space. Centring cancels in the difference,
    /// so only the per-column scale matters and the merge stays sparse.
    pub fn distance(&self, a: &FeatureVector, b: &FeatureVector) -> f64 {
        let (ea, eb) = (a.entries(), b.entries());
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        let mut add = |col: usize, diff: f64| {
            let d = (self.scale(col) * diff).abs();
            acc += match self.metric {
                Metric::Euclidean => d * d,
                Metric::Manhattan => d,
            };
        };
        while i < ea.len() || j < eb.len() {
            match (ea.get(i), eb.get(j)) {
                (Some(&(ca, va)), Some(&(cb, vb))) if ca == cb => {
                    add(ca, va - vb);
                    i += 1;
                    j += 1;
                }
                (Some(&(ca, va)), Some(&(cb, _))) if ca < cb => {
                    add(ca, va);
                    i += 1;
                }
                (Some(&(ca, va)), None) => {
                    add(ca, va);
                    i += 1;
                }
                (_, Some(&(cb, vb))) => {
                    add(cb, -vb);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        match self.metric {
            Metric::Euclidean => acc.sqrt(),
            Metric::Manhattan => acc,
        }
    }

    /// Indices of the `k` nearest training rows; ties go to the lower index.
    pub fn neighbours(&self, x: &FeatureVector) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self.rows.iter().enumerate().map(|(i, r)| (self.distance(x, r), i)).collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|p| p.1).collect()
    }

    /// Fraction of positive labels among the neighbours.
    pub fn score(&self, x: &FeatureVector) -> f64 {
        let nb = self.neighbours(x);
        if nb.is_empty() {
            return 0.0;
        }
        nb.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nb.len() as f64
    }
}
