use serde::{Deserialize, Serialize};

use super::{DesignMatrix, FeatureVector};

pub const STD_FLOOR: f64 = 1e-12;

/// Per-column mean and population standard deviation from a training matrix.
/// One-hot columns are marked and left untouched by [`FeatureStats::transform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub one_hot: Vec<bool>,
}

impl FeatureStats {
    pub fn fit(matrix: &DesignMatrix) -> Self {
        Self::fit_rows(&matrix.rows, matrix.dim(), matrix.space.one_hot_mask())
    }

    pub fn fit_rows(rows: &[FeatureVector], dim: usize, one_hot: Vec<bool>) -> Self {
        let n = rows.len().max(1) as f64;
        let mut sum = vec![0.0; dim];
        for r in rows {
            for &(c, v) in r.entries() {
                sum[c] += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        // two-pass variance; implicit zeros contribute mean^2 each
        let mut sq = vec![0.0; dim];
        let mut nnz = vec![0usize; dim];
        for r in rows {
            for &(c, v) in r.entries() {
                sq[c] += (v - mean[c]).powi(2);
                nnz[c] += 1;
            }
        }
        let sd = (0..dim)
            .map(|c| {
                let zeros = rows.len() - nnz[c];
                ((sq[c] + zeros as f64 * mean[c] * mean[c]) / n).sqrt()
            })
            .collect();
        FeatureStats { mean, sd, one_hot }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / sd` on continuous columns; constant columns (sd below
    /// the floor) map to zero.
    pub fn transform(&self, x: &FeatureVector) -> FeatureVector {
        let mut dense = x.to_dense();
        for (c, v) in dense.iter_mut().enumerate() {
            if self.one_hot[c] {
                continue;
            }
            *v = if self.sd[c] <= STD_FLOOR {
                0.0
            } else {
                (*v - self.mean[c]) / self.sd[c].max(STD_FLOOR)
            };
        }
        FeatureVector::from_dense(&dense)
    }
}

pub fn standardize(matrix: &DesignMatrix, stats: &FeatureStats) -> DesignMatrix {
    DesignMatrix {
        rows: matrix.rows.iter().map(|r| stats.transform(r)).collect(),
        labels: matrix.labels.clone(),
        ids: matrix.ids.clone(),
        space: matrix.space.clone(),
    }
}
