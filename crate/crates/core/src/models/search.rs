//! Random hyperparameter search scored by stratified k-fold F1.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, SearchSpace};
use super::{canonical_order, train, ModelKind};
use crate::error::{Error, Result};
use crate::evaluate::{compute_metrics, confusion};
use crate::features::DesignMatrix;
use crate::{par, seed};

/// Splits row indices into `k` folds with per-class round-robin dealing
/// after a seeded shuffle. Rows are taken in canonical order first, so the
/// folds do not depend on input row order.
pub fn stratified_folds(matrix: &DesignMatrix, k: usize, seed_: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if matrix.len() < k {
        return Err(Error::Data(format!("{} rows cannot fill {k} folds", matrix.len())));
    }
    let order = canonical_order(matrix);
    let mut rng = seed::rng(seed::derive(seed_, &["folds"]));
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = order.iter().copied().filter(|&i| matrix.labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    Ok(folds)
}

/// Mean F1 at threshold 0.5 over stratified folds.
pub fn cv_f1(kind: ModelKind, matrix: &DesignMatrix, hyper: &Hyperparams, k_folds: usize, seed_: u64) -> Result<f64> {
    let folds = stratified_folds(matrix, k_folds, seed_)?;
    let scores = par::try_map(&(0..k_folds).collect::<Vec<_>>(), |&f| {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let fit = train(kind, &matrix.subset(&train_idx), hyper, seed::derive_index(seed_, f as u64))?;
        let labels: Vec<u8> = folds[f].iter().map(|&i| matrix.labels[i]).collect();
        let preds = folds[f]
            .iter()
            .map(|&i| Ok((fit.predict_score(&matrix.rows[i])? >= 0.5) as u8))
            .collect::<Result<Vec<u8>>>()?;
        Ok::<f64, Error>(compute_metrics(&confusion(&labels, &preds)?).f1)
    })?;
    Ok(scores.iter().sum::<f64>() / k_folds as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub kind: ModelKind,
    pub best: Hyperparams,
    pub cv_f1: f64,
    pub k_folds: usize,
    /// Every sampled candidate with its cross-validated F1, in draw order.
    pub candidates: Vec<(Hyperparams, f64)>,
}

/// Draws `n_iters` candidates from `space` and keeps the one with the highest
/// cross-validated F1 (first drawn wins ties). Every candidate is scored on
/// the same folds.
pub fn random_search(
    kind: ModelKind,
    matrix: &DesignMatrix,
    space: &SearchSpace,
    n_iters: usize,
    k_folds: usize,
    seed_: u64,
) -> Result<SearchResult> {
    if n_iters == 0 {
        return Err(Error::Config("random search needs at least one iteration".into()));
    }
    space.validate()?;
    let pos = matrix.n_positive();
    if pos == 0 || pos == matrix.len() {
        return Err(Error::SingleClass);
    }
    let mut rng = seed::rng(seed::derive(seed_, &["search", kind.as_str()]));
    let candidates: Vec<Hyperparams> = (0..n_iters).map(|_| space.sample(&mut rng)).collect();
    let cv_seed = seed::derive(seed_, &["cv"]);
    let scores = par::try_map(&candidates, |h| cv_f1(kind, matrix, h, k_folds, cv_seed))?;
    let (best_i, best_f1) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bf), (i, &f)| if f > bf { (i, f) } else { (bi, bf) });
    Ok(SearchResult {
        kind,
        best: candidates[best_i].clone(),
        cv_f1: best_f1,
        k_folds,
        candidates: candidates.into_iter().zip(scores).collect(),
    })
}
