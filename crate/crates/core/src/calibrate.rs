//! ROC curves, Youden-J operating points and the cross-validated decision
//! threshold.
//!
//! The threshold is picked per fold on a validation set built at the target
//! prevalence (fold positives subsampled, negatives padded from a held-out
//! pool) and the fold thresholds are averaged.

use log::warn;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureVector};
use crate::models::{stratified_folds, train, Hyperparams, ModelKind};
use crate::{par, seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Predict positive iff score >= threshold. The all-negative endpoint
    /// uses `+inf` (serialized as null).
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl RocPoint {
    pub fn j(&self) -> f64 {
        self.sensitivity + self.specificity - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending threshold; the first point is the all-negative endpoint.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let point = |threshold: f64, tp: u64, fp: u64| RocPoint {
        threshold,
        tp,
        fp,
        sensitivity: tp as f64 / n_pos as f64,
        specificity: (n_neg - fp) as f64 / n_neg as f64,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(s, tp, fp));
    }
    // trapezoids on integer counts: sum (dFP) * (TP_prev + TP) / (2 P N)
    let twice_area: u128 = points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) as u128 * (w[0].tp + w[1].tp) as u128)
        .sum();
    let auc = twice_area as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;
    Ok(RocCurve {
        points,
        auc,
        n_pos,
        n_neg,
    })
}

/// The finite threshold with the largest J; the smallest such threshold on
/// ties. Returns `None` only for a curve without finite points.
pub fn youden_threshold(curve: &RocCurve) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    // points run in descending threshold, so `>=` keeps the smallest on ties
    for p in curve.points.iter().filter(|p| p.threshold.is_finite()) {
        let j = p.j();
        if best.is_none_or(|(_, bj)| j >= bj) {
            best = Some((p.threshold, j));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
    pub j: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub k_folds: usize,
    pub target_prevalence: f64,
    pub per_fold_thresholds: Vec<f64>,
    #[serde(rename = "per_fold_J")]
    pub per_fold_j: Vec<f64>,
    pub chosen_threshold: f64,
    pub folds: Vec<FoldOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_folds: Vec<usize>,
}

/// Validation positives needed to reach `prevalence` with `n_neg` negatives.
pub fn positives_for(n_neg: usize, prevalence: f64) -> usize {
    ((n_neg as f64 * prevalence / (1.0 - prevalence)).round() as usize).max(1)
}

/// Cross-validated Youden threshold for `kind` trained with `hyper`.
///
/// `extra_negatives` are held-out negative rows (already in the training
/// feature space) dealt across folds to pad the validation sets.
pub fn cv_threshold(
    kind: ModelKind,
    hyper: &Hyperparams,
    matrix: &DesignMatrix,
    extra_negatives: &[FeatureVector],
    k: usize,
    target_prevalence: f64,
    seed_: u64,
) -> Result<ThresholdReport> {
    cv_threshold_with(matrix, extra_negatives, k, target_prevalence, seed_, |train_m, s| {
        let model = train(kind, train_m, hyper, s)?;
        Ok(move |x: &FeatureVector| model.predict_score(x))
    })
}

/// [`cv_threshold`] with a caller-supplied fitting routine, which receives the
/// fold's training rows and a fold seed and returns a scoring function.
pub fn cv_threshold_with<S, F>(
    matrix: &DesignMatrix,
    extra_negatives: &[FeatureVector],
    k: usize,
    target_prevalence: f64,
    seed_: u64,
    fit: F,
) -> Result<ThresholdReport>
where
    S: Fn(&FeatureVector) -> Result<f64>,
    F: Fn(&DesignMatrix, u64) -> Result<S> + Sync,
{
    if !(target_prevalence > 0.0 && target_prevalence < 1.0) {
        return Err(Error::Config(format!(
            "target prevalence must lie in (0, 1), got {target_prevalence}"
        )));
    }
    if let Some(x) = extra_negatives.iter().find(|x| x.dim() != matrix.dim()) {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: x.dim(),
        });
    }
    let folds = stratified_folds(matrix, k, seed::derive(seed_, &["calibrate"]))?;
    let mut pool: Vec<usize> = (0..extra_negatives.len()).collect();
    pool.shuffle(&mut seed::rng(seed::derive(seed_, &["calibrate", "pool"])));
    let results = par::try_map(&(0..k).collect::<Vec<_>>(), |&f| {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let train_m = matrix.subset(&train_idx);
        let fold_pos: Vec<usize> = folds[f].iter().copied().filter(|&i| matrix.labels[i] == 1).collect();
        let fold_neg: Vec<usize> = folds[f].iter().copied().filter(|&i| matrix.labels[i] == 0).collect();
        let pool_share: Vec<usize> = pool.iter().copied().skip(f).step_by(k).collect();
        let n_neg = fold_neg.len() + pool_share.len();
        let wanted = positives_for(n_neg, target_prevalence);
        if fold_pos.is_empty() || n_neg == 0 {
            return Ok(None);
        }
        if wanted > fold_pos.len() {
            warn!(
                "fold {f}: {} positives available, {wanted} needed for prevalence {target_prevalence}; using all",
                fold_pos.len()
            );
        }
        let take = wanted.min(fold_pos.len());
        let mut rng = seed::rng(seed::derive_index(seed::derive(seed_, &["calibrate", "positives"]), f as u64));
        let mut chosen: Vec<usize> = index::sample(&mut rng, fold_pos.len(), take).into_iter().map(|i| fold_pos[i]).collect();
        chosen.sort_unstable();

        if train_m.n_positive() == 0 || train_m.n_positive() == train_m.len() {
            return Ok(None);
        }
        let score = fit(&train_m, seed::derive_index(seed_, f as u64))?;
        let mut scores = Vec::with_capacity(take + n_neg);
        let mut labels = Vec::with_capacity(take + n_neg);
        for &i in &chosen {
            scores.push(score(&matrix.rows[i])?);
            labels.push(1u8);
        }
        for &i in &fold_neg {
            scores.push(score(&matrix.rows[i])?);
            labels.push(0u8);
        }
        for &i in &pool_share {
            scores.push(score(&extra_negatives[i])?);
            labels.push(0u8);
        }
        let curve = roc_curve(&scores, &labels)?;
        let (threshold, j) = youden_threshold(&curve).expect("curve has finite points");
        Ok::<_, Error>(Some(FoldOutcome {
            fold: f,
            n_pos: take,
            n_neg,
            threshold,
            j,
            auc: curve.auc,
        }))
    })?;
    let mut folds_out = Vec::new();
    let mut skipped = Vec::new();
    for (f, r) in results.into_iter().enumerate() {
        match r {
            Some(o) => folds_out.push(o),
            None => {
                warn!("calibration fold {f} lacks a class; skipped");
                skipped.push(f);
            }
        }
    }
    if folds_out.is_empty() {
        return Err(Error::Data("every calibration fold was skipped".into()));
    }
    let per_fold_thresholds: Vec<f64> = folds_out.iter().map(|o| o.threshold).collect();
    let chosen = per_fold_thresholds.iter().sum::<f64>() / per_fold_thresholds.len() as f64;
    let (lo, hi) = per_fold_thresholds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    Ok(ThresholdReport {
        k_folds: k,
        target_prevalence,
        per_fold_j: folds_out.iter().map(|o| o.j).collect(),
        per_fold_thresholds,
        // the mean can drift past the extremes by an ulp
        chosen_threshold: chosen.clamp(lo, hi),
        folds: folds_out,
        skipped_folds: skipped,
    })
}
