//! Naive Bayes with Gaussian likelihoods for continuous features and
//! Bernoulli likelihoods (Laplace smoothed) for one-hot features.

use serde::{Deserialize, Serialize};

use super::hyper::Hyperparams;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub one_hot: Vec<bool>,
    /// Indexed `[class][feature]`; for one-hot columns `mean` holds the
    /// smoothed probability of a one and `var` is unused.
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
    pub log_prior: [f64; 2],
    /// Class log-likelihood of the all-zero vector.
    pub log_zero: [f64; 2],
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn bernoulli(x: f64, p: f64) -> f64 {
    if x != 0.0 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

pub fn fit(rows: &[&FeatureVector], labels: &[u8], one_hot: &[bool], h: &Hyperparams) -> Result<NaiveBayesModel> {
    let var_smoothing = h.f64_or("var_smoothing", 1e-9)?;
    if !(var_smoothing >= 0.0) {
        return Err(Error::Config("`var_smoothing` must be non-negative".into()));
    }
    let d = one_hot.len();
    let mut count = [0.0f64; 2];
    let mut sum = [vec![0.0; d], vec![0.0; d]];
    let mut nz = [vec![0.0; d], vec![0.0; d]];
    for (x, &y) in rows.iter().zip(labels) {
        let c = y as usize;
        count[c] += 1.0;
        for &(j, v) in x.entries() {
            sum[c][j] += v;
            nz[c][j] += 1.0;
        }
    }
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    for c in 0..2 {
        for j in 0..d {
            mean[c][j] = if one_hot[j] {
                (nz[c][j] + 1.0) / (count[c] + 2.0)
            } else {
                sum[c][j] / count[c]
            };
        }
    }
    let mut sq = [vec![0.0; d], vec![0.0; d]];
    let mut total_sum = vec![0.0; d];
    for (x, &y) in rows.iter().zip(labels) {
        let c = y as usize;
        for &(j, v) in x.entries() {
            if !one_hot[j] {
                sq[c][j] += (v - mean[c][j]).powi(2);
            }
            total_sum[j] += v;
        }
    }
    // overall variance per continuous feature drives the smoothing epsilon
    let n = rows.len() as f64;
    let mut max_var = 0.0f64;
    let mut var = [vec![0.0; d], vec![0.0; d]];
    for j in (0..d).filter(|&j| !one_hot[j]) {
        let m = total_sum[j] / n;
        let mut total_sq = 0.0;
        for c in 0..2 {
            // zeros contribute (0 - mean)^2 each
            let zeros = count[c] - nz[c][j];
            let class_sq = sq[c][j] + zeros * mean[c][j].powi(2);
            var[c][j] = class_sq / count[c];
            total_sq += class_sq + count[c] * (mean[c][j] - m).powi(2);
        }
        max_var = max_var.max(total_sq / n);
    }
    let eps = (var_smoothing * max_var).max(f64::MIN_POSITIVE.sqrt());
    for c in 0..2 {
        for j in (0..d).filter(|&j| !one_hot[j]) {
            var[c][j] += eps;
        }
    }
    let mut log_zero = [0.0; 2];
    for c in 0..2 {
        log_zero[c] = (0..d)
            .map(|j| {
                if one_hot[j] {
                    bernoulli(0.0, mean[c][j])
                } else {
                    gaussian(0.0, mean[c][j], var[c][j])
                }
            })
            .sum();
    }
    Ok(NaiveBayesModel {
        one_hot: one_hot.to_vec(),
        log_prior: [(count[0] / n).ln(), (count[1] / n).ln()],
        mean,
        var,
        log_zero,
    })
}

impl NaiveBayesModel {
    fn log_joint(&self, c: usize, x: &FeatureVector) -> f64 {
        let mut l = self.log_prior[c] + self.log_zero[c];
        for &(j, v) in x.entries() {
            l += if self.one_hot[j] {
                bernoulli(v, self.mean[c][j]) - bernoulli(0.0, self.mean[c][j])
            } else {
                gaussian(v, self.mean[c][j], self.var[c][j]) - gaussian(0.0, self.mean[c][j], self.var[c][j])
            };
        }
        l
    }

    /// Posterior probability of the positive class.
    pub fn score(&self, x: &FeatureVector) -> f64 {
        super::tree::sigmoid(self.log_joint(1, x) - self.log_joint(0, x))
    }
}
