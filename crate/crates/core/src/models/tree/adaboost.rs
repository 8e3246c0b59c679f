//! Discrete AdaBoost over decision stumps.
//!
//! Round m picks the stump with the lowest weighted error `eps`, gets weight
//! `alpha = learning_rate * 0.5 * ln((1 - eps) / eps)` and reweights samples by
//! `exp(-alpha * y * h(x))`. The ensemble emits `sigmoid(2 * sum alpha h(x))`.

use super::binning::BinnedMatrix;
use super::{Aggregation, Node, Tree, TreeEnsemble};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoostParams {
    pub n_stumps: usize,
    pub learning_rate: f64,
}

/// Per-round diagnostics: the stump's weighted error before reweighting and
/// its weighted error under the updated weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrace {
    pub error: f64,
    pub error_after_update: f64,
}

struct Stump {
    feature: usize,
    bin: usize,
    /// Prediction for the left side (+1 or -1); the right side is the negation.
    left_sign: f64,
    error: f64,
}

fn best_stump(binned: &BinnedMatrix, labels: &[u8], weights: &[f64]) -> Option<Stump> {
    let mut best: Option<Stump> = None;
    let total: f64 = weights.iter().sum();
    for f in 0..binned.dim() {
        let nb = binned.n_bins(f);
        if nb < 2 {
            continue;
        }
        let col = &binned.columns[f];
        let mut wpos = vec![0.0; nb];
        let mut wneg = vec![0.0; nb];
        for (r, &w) in weights.iter().enumerate() {
            if labels[r] == 1 {
                wpos[col[r] as usize] += w;
            } else {
                wneg[col[r] as usize] += w;
            }
        }
        let pos_total: f64 = wpos.iter().sum();
        let (mut lp, mut ln) = (0.0, 0.0);
        for b in 0..nb - 1 {
            lp += wpos[b];
            ln += wneg[b];
            // left -> +1, right -> -1 misclassifies left negatives and right positives
            let err_plus = ln + (pos_total - lp);
            let err_minus = total - err_plus;
            for (sign, err) in [(1.0, err_plus), (-1.0, err_minus)] {
                if best.as_ref().is_none_or(|s| err < s.error) {
                    best = Some(Stump {
                        feature: f,
                        bin: b,
                        left_sign: sign,
                        error: err,
                    });
                }
            }
        }
    }
    best
}

pub fn fit(binned: &BinnedMatrix, labels: &[u8], params: &AdaBoostParams) -> (TreeEnsemble, Vec<RoundTrace>) {
    let n = binned.n_rows;
    let mut weights = vec![1.0 / n as f64; n];
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut trees = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..params.n_stumps {
        let Some(stump) = best_stump(binned, labels, &weights) else { break };
        let eps = stump.error;
        if eps >= 0.5 - 1e-12 {
            break;
        }
        let alpha = params.learning_rate * 0.5 * ((1.0 - eps) / eps.max(1e-300)).ln();
        let alpha = if alpha.is_finite() { alpha } else { params.learning_rate * 0.5 * (1.0f64 / 1e-16).ln() };
        let col = &binned.columns[stump.feature];
        let h: Vec<f64> = (0..n)
            .map(|r| if (col[r] as usize) <= stump.bin { stump.left_sign } else { -stump.left_sign })
            .collect();
        for r in 0..n {
            weights[r] *= (-alpha * y[r] * h[r]).exp();
        }
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= z);
        let error_after_update: f64 = (0..n).filter(|&r| h[r] != y[r]).map(|r| weights[r]).sum();
        trace.push(RoundTrace {
            error: eps,
            error_after_update,
        });
        trees.push(Tree {
            nodes: vec![
                Node::Split {
                    feature: stump.feature,
                    threshold: binned.threshold(stump.feature, stump.bin),
                    gain: 0.5 - eps,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: alpha * stump.left_sign },
                Node::Leaf { value: -alpha * stump.left_sign },
            ],
        });
        if eps == 0.0 {
            break;
        }
    }
    (
        TreeEnsemble {
            trees,
            base_score: 0.0,
            aggregation: Aggregation::Logistic { scale: 2.0 },
        },
        trace,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::seed;
    use rand::Rng;

    fn noisy(n: usize, seed_: u64) -> (Vec<FeatureVector>, Vec<u8>) {
        let mut rng = seed::rng(seed_);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c: f64 = rng.random();
            let y = (a + 0.5 * b + 0.3 * rng.random::<f64>() > 0.9) as u8;
            rows.push(FeatureVector::from_dense(&[a, b, c]));
            labels.push(y);
        }
        (rows, labels)
    }

    #[test]
    fn reweighted_error_is_one_half() {
        let (rows, labels) = noisy(200, 3);
        let refs: Vec<_> = rows.iter().collect();
        let b = BinnedMatrix::build(&refs, 3, 255);
        let (ens, trace) = fit(&b, &labels, &AdaBoostParams { n_stumps: 25, learning_rate: 1.0 });
        assert!(!trace.is_empty());
        assert_eq!(ens.trees.len(), trace.len());
        for t in &trace {
            assert!(t.error < 0.5);
            assert!((t.error_after_update - 0.5).abs() < 1e-9, "{t:?}");
        }
    }

    #[test]
    fn first_stump_beats_chance() {
        let (rows, labels) = noisy(300, 5);
        let refs: Vec<_> = rows.iter().collect();
        let b = BinnedMatrix::build(&refs, 3, 255);
        let (ens, _) = fit(&b, &labels, &AdaBoostParams { n_stumps: 40, learning_rate: 0.5 });
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &y)| (ens.predict_proba(r) >= 0.5) == (y == 1))
            .count();
        assert!(correct as f64 / rows.len() as f64 > 0.8);
    }
}
