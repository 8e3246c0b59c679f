//! Interventional Shapley values of a model's probability output.
//!
//! The value of a coalition `S` is the mean score over background rows `b`
//! of the hybrid input that takes `x` on `S` and `b` elsewhere. Features on
//! which `x` agrees with every background row cannot change any hybrid, so
//! they are null players and only the remaining "active" features are
//! enumerated. Up to `max_exact_features` active features are solved
//! exactly from a table of all coalition values; beyond that, Shapley
//! values are estimated from seeded random permutations.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::models::TrainedModel;
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    pub max_exact_features: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            max_exact_features: 12,
            n_permutations: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base_value: f64,
    pub prediction: f64,
    /// One entry per model feature.
    pub contributions: Vec<f64>,
    /// Standard error of each estimate in sampling mode.
    pub standard_errors: Option<Vec<f64>>,
    pub exact: bool,
}

impl ShapExplanation {
    pub fn additivity_gap(&self) -> f64 {
        (self.base_value + self.contributions.iter().sum::<f64>() - self.prediction).abs()
    }
}

/// Anything with a fixed input dimension and a scalar output. Trained models
/// explain their probability score.
pub trait Scorer: Sync {
    fn dim(&self) -> usize;
    fn score(&self, x: &FeatureVector) -> Result<f64>;
}

impl Scorer for TrainedModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &FeatureVector) -> Result<f64> {
        self.predict_score(x)
    }
}

/// A plain function of the dense input, for games built by hand.
pub struct FnScorer<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Scorer for FnScorer<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &FeatureVector) -> Result<f64> {
        Ok((self.f)(&x.to_dense()))
    }
}

fn check_inputs(model: &impl Scorer, x: &FeatureVector, background: &[FeatureVector]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::Config("SHAP background set is empty".into()));
    }
    for v in std::iter::once(x).chain(background) {
        if v.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                actual: v.dim(),
            });
        }
    }
    Ok(())
}

struct Game<'a, S> {
    model: &'a S,
    x: Vec<f64>,
    background: Vec<Vec<f64>>,
    active: Vec<usize>,
}

impl<S: Scorer> Game<'_, S> {
    /// Score of the hybrid that takes `x` on the active features flagged in
    /// `take` and background row `b` elsewhere.
    fn hybrid_score(&self, b: usize, take: impl Fn(usize) -> bool) -> Result<f64> {
        let mut d = self.background[b].clone();
        for (k, &j) in self.active.iter().enumerate() {
            if take(k) {
                d[j] = self.x[j];
            }
        }
        self.model.score(&FeatureVector::from_dense(&d))
    }

    /// Mean background score, i.e. the value of the empty coalition.
    fn base(&self) -> Result<f64> {
        let mut s = 0.0;
        for b in 0..self.background.len() {
            s += self.hybrid_score(b, |_| false)?;
        }
        Ok(s / self.background.len() as f64)
    }

    /// Coalition value for a bitmask over the active features (exact mode
    /// only, so fewer than 64 of them).
    fn value(&self, mask: u64) -> Result<f64> {
        let mut s = 0.0;
        for b in 0..self.background.len() {
            s += self.hybrid_score(b, |k| mask >> k & 1 == 1)?;
        }
        Ok(s / self.background.len() as f64)
    }
}

pub fn shap_values<S: Scorer>(model: &S, x: &FeatureVector, background: &[FeatureVector], config: &ShapConfig) -> Result<ShapExplanation> {
    check_inputs(model, x, background)?;
    let xd = x.to_dense();
    let bd: Vec<Vec<f64>> = background.iter().map(|b| b.to_dense()).collect();
    let active: Vec<usize> = (0..model.dim()).filter(|&j| bd.iter().any(|b| b[j] != xd[j])).collect();
    let game = Game {
        model,
        x: xd,
        background: bd,
        active,
    };
    let prediction = model.score(x)?;
    let m = game.active.len();
    let mut contributions = vec![0.0; model.dim()];
    if m <= config.max_exact_features.min(20) {
        let values = par::try_map(&(0..1u64 << m).collect::<Vec<_>>(), |&mask| game.value(mask))?;
        // weight(|S|) = |S|! (m - |S| - 1)! / m!
        let mut weight = vec![0.0; m];
        for (s, w) in weight.iter_mut().enumerate() {
            *w = 1.0 / (m as f64 * binomial(m - 1, s));
        }
        for (k, &j) in game.active.iter().enumerate() {
            let bit = 1u64 << k;
            let mut phi = 0.0;
            for mask in (0..1u64 << m).filter(|s| s & bit == 0) {
                phi += weight[mask.count_ones() as usize] * (values[(mask | bit) as usize] - values[mask as usize]);
            }
            contributions[j] = phi;
        }
        return Ok(ShapExplanation {
            base_value: values[0],
            prediction,
            contributions,
            standard_errors: None,
            exact: true,
        });
    }

    let n_perm = config.n_permutations.max(2);
    let base_seed = seed::derive(config.seed, &["shap"]);
    // each permutation yields a full estimate vector (mean over background)
    let estimates = par::try_map(&(0..n_perm).collect::<Vec<_>>(), |&p| {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut seed::rng(seed::derive_index(base_seed, p as u64)));
        let mut est = vec![0.0; m];
        let mut taken = vec![false; m];
        for b in 0..game.background.len() {
            taken.iter_mut().for_each(|t| *t = false);
            let mut prev = game.hybrid_score(b, |_| false)?;
            for &k in &order {
                taken[k] = true;
                let cur = game.hybrid_score(b, |i| taken[i])?;
                est[k] += cur - prev;
                prev = cur;
            }
        }
        let nb = game.background.len() as f64;
        est.iter_mut().for_each(|e| *e /= nb);
        Ok::<_, Error>(est)
    })?;
    let mut se = vec![0.0; model.dim()];
    for (k, &j) in game.active.iter().enumerate() {
        let vals: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
        let mean = vals.iter().sum::<f64>() / n_perm as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_perm - 1) as f64;
        contributions[j] = mean;
        se[j] = (var / n_perm as f64).sqrt();
    }
    let base_value = game.base()?;
    Ok(ShapExplanation {
        base_value,
        prediction,
        contributions,
        standard_errors: Some(se),
        exact: false,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;
pub const BRUTE_FORCE_MAX_BACKGROUND: usize = 64;

/// Reference Shapley values by direct enumeration over every model feature:
/// for each feature and each coalition of the others, both coalition values
/// are recomputed from scratch with factorial weights.
pub fn brute_force_shapley<S: Scorer>(model: &S, x: &FeatureVector, background: &[FeatureVector]) -> Result<Vec<f64>> {
    check_inputs(model, x, background)?;
    let d = model.dim();
    if d > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::Config(format!(
            "brute-force Shapley supports at most {BRUTE_FORCE_MAX_FEATURES} features, model has {d}"
        )));
    }
    if background.len() > BRUTE_FORCE_MAX_BACKGROUND {
        return Err(Error::Config(format!(
            "brute-force Shapley supports at most {BRUTE_FORCE_MAX_BACKGROUND} background rows"
        )));
    }
    let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
    let v = |coalition: &[bool]| -> Result<f64> {
        let mut total = 0.0;
        for b in background {
            let entries: Vec<(usize, f64)> = (0..d)
                .map(|j| (j, if coalition[j] { x.get(j) } else { b.get(j) }))
                .filter(|e| e.1 != 0.0)
                .collect();
            total += model.score(&FeatureVector::new(d, entries)?)?;
        }
        Ok(total / background.len() as f64)
    };
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
        for mask in 0..1usize << others.len() {
            let mut coalition = vec![false; d];
            let mut size = 0;
            for (k, &j) in others.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    coalition[j] = true;
                    size += 1;
                }
            }
            let without = v(&coalition)?;
            coalition[i] = true;
            let with = v(&coalition)?;
            *p += fact(size) * fact(d - size - 1) / fact(d) * (with - without);
        }
    }
    Ok(phi)
}
