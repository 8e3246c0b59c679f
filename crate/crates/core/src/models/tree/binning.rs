//! Rank-based feature binning shared by every tree learner.
//!
//! Bin edges are actual training values chosen by rank, and split thresholds
//! are the upper edge of the left bin. Tree predictions are therefore
//! unchanged by any strictly increasing transform applied to a feature in
//! both training and test data.

use crate::features::FeatureVector;
use crate::par;

pub const MAX_BINS: usize = 256;

#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    /// Column-major bin indices.
    pub columns: Vec<Vec<u8>>,
    /// Ascending upper edges per column; the last edge is the column maximum.
    pub edges: Vec<Vec<f64>>,
}

fn edges_for(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut unique: Vec<f64> = sorted.to_vec();
    unique.dedup();
    if unique.len() <= max_bins {
        return unique;
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..=max_bins)
        .map(|q| sorted[(q * n).div_ceil(max_bins) - 1])
        .collect();
    edges.dedup();
    edges
}

pub fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x).min(edges.len().saturating_sub(1))
}

impl BinnedMatrix {
    pub fn build(rows: &[&FeatureVector], dim: usize, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, MAX_BINS);
        let n = rows.len();
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in row.entries() {
                by_col[c].push((r, v));
            }
        }
        let built = par::map(&by_col, |entries| {
            let mut dense = vec![0.0; n];
            for &(r, v) in entries {
                dense[r] = v;
            }
            let mut sorted = dense.clone();
            sorted.sort_by(f64::total_cmp);
            let edges = if n == 0 { vec![0.0] } else { edges_for(&sorted, max_bins) };
            let bins = dense.iter().map(|&x| bin_of(&edges, x) as u8).collect::<Vec<u8>>();
            (bins, edges)
        });
        let (columns, edges) = built.into_iter().unzip();
        BinnedMatrix {
            n_rows: n,
            columns,
            edges,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn n_bins(&self, col: usize) -> usize {
        self.edges[col].len()
    }

    /// Threshold for a split that sends bins `0..=bin` left.
    pub fn threshold(&self, col: usize, bin: usize) -> f64 {
        self.edges[col][bin]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_unique_values_get_exact_bins() {
        let rows: Vec<FeatureVector> = [0.0, 3.0, 1.0, 3.0, 0.0]
            .iter()
            .map(|&v| FeatureVector::from_dense(&[v]))
            .collect();
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let b = BinnedMatrix::build(&refs, 1, 255);
        assert_eq!(b.edges[0], vec![0.0, 1.0, 3.0]);
        assert_eq!(b.columns[0], vec![0, 2, 1, 2, 0]);
    }

    #[test]
    fn many_values_are_quantised() {
        let rows: Vec<FeatureVector> = (0..1000).map(|i| FeatureVector::from_dense(&[i as f64])).collect();
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let b = BinnedMatrix::build(&refs, 1, 10);
        assert_eq!(b.n_bins(0), 10);
        assert_eq!(*b.edges[0].last().unwrap(), 999.0);
        // roughly equal occupancy
        for bin in 0..10u8 {
            let c = b.columns[0].iter().filter(|&&x| x == bin).count();
            assert_eq!(c, 100);
        }
        // every row satisfies x <= edge of its bin
        for (r, row) in rows.iter().enumerate() {
            assert!(row.get(0) <= b.edges[0][b.columns[0][r] as usize]);
        }
    }

    #[test]
    fn out_of_range_values_clamp_to_last_bin() {
        assert_eq!(bin_of(&[1.0, 2.0], 5.0), 1);
        assert_eq!(bin_of(&[1.0, 2.0], -5.0), 0);
        assert_eq!(bin_of(&[1.0, 2.0], 1.5), 1);
    }
}
