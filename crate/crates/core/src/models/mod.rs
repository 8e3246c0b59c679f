//! Ten classifier kinds behind one train / score interface, plus
//! random-search model selection.
//!
//! Training rows are first put into a canonical order (label, then sparse
//! entries), so a fitted model depends on the seed and the multiset of rows,
//! never on the order they arrive in.

pub mod hyper;
pub mod knn;
pub mod linear;
pub mod naive_bayes;
pub mod search;
pub mod tree;

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::features::{DesignMatrix, FeatureVector};
use crate::seed;
pub use hyper::{default_search_space, preset, Hyperparams, ParamRange, ParamValue, SearchSpace};
pub use search::{random_search, stratified_folds, SearchResult};
use tree::binning::{BinnedMatrix, MAX_BINS};
use tree::TreeEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LR,
    KNN,
    NB,
    SVC,
    DT,
    RF,
    AdaBoost,
    #[serde(rename = "LightGBMPreset")]
    LightGBM,
    #[serde(rename = "HGBPreset")]
    HGB,
    #[serde(rename = "XGBoostPreset")]
    XGBoost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::LR,
        ModelKind::KNN,
        ModelKind::NB,
        ModelKind::SVC,
        ModelKind::DT,
        ModelKind::RF,
        ModelKind::AdaBoost,
        ModelKind::LightGBM,
        ModelKind::HGB,
        ModelKind::XGBoost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LR => "LR",
            ModelKind::KNN => "KNN",
            ModelKind::NB => "NB",
            ModelKind::SVC => "SVC",
            ModelKind::DT => "DT",
            ModelKind::RF => "RF",
            ModelKind::AdaBoost => "AdaBoost",
            ModelKind::LightGBM => "LightGBMPreset",
            ModelKind::HGB => "HGBPreset",
            ModelKind::XGBoost => "XGBoostPreset",
        }
    }

    pub fn is_gbdt(self) -> bool {
        matches!(self, ModelKind::LightGBM | ModelKind::HGB | ModelKind::XGBoost)
    }

    pub fn is_tree_based(self) -> bool {
        self.is_gbdt() || matches!(self, ModelKind::DT | ModelKind::RF | ModelKind::AdaBoost)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| {
                let name = k.as_str().to_ascii_lowercase();
                name == lower || name.trim_end_matches("preset") == lower
            })
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(linear::LinearModel),
    Knn(knn::KnnModel),
    NaiveBayes(naive_bayes::NaiveBayesModel),
    Trees(TreeEnsemble),
}

/// A fitted classifier. Immutable once built apart from the decision
/// threshold, which calibration attaches afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyper: Hyperparams,
    pub dim: usize,
    pub decision_threshold: f64,
    /// Hash of the feature-space manifest the model was trained on.
    pub space_hash: String,
    pub params: ModelParams,
}

/// Row order used for fitting: labels first, then sparse entries compared
/// lexicographically.
pub fn canonical_order(matrix: &DesignMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..matrix.len()).collect();
    idx.sort_by(|&a, &b| {
        matrix.labels[a]
            .cmp(&matrix.labels[b])
            .then_with(|| cmp_rows(&matrix.rows[a], &matrix.rows[b]))
    });
    idx
}

fn cmp_rows(a: &FeatureVector, b: &FeatureVector) -> Ordering {
    for (x, y) in a.entries().iter().zip(b.entries()) {
        let o = x.0.cmp(&y.0).then_with(|| x.1.total_cmp(&y.1));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.nnz().cmp(&b.nnz())
}

pub fn train(kind: ModelKind, matrix: &DesignMatrix, hyper: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    if matrix.is_empty() {
        return Err(Error::Data("empty training matrix".into()));
    }
    let pos = matrix.n_positive();
    if pos == 0 || pos == matrix.len() {
        return Err(Error::SingleClass);
    }
    if let Some(r) = matrix.rows.iter().find(|r| r.dim() != matrix.dim()) {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: r.dim(),
        });
    }
    let hyper = hyper.merged_over(&preset(kind));
    let order = canonical_order(matrix);
    let rows: Vec<&FeatureVector> = order.iter().map(|&i| &matrix.rows[i]).collect();
    let labels: Vec<u8> = order.iter().map(|&i| matrix.labels[i]).collect();
    let dim = matrix.dim();
    let seed = seed::derive(seed, &["train", kind.as_str()]);
    let one_hot = matrix.space.one_hot_mask();
    let stats = || {
        let owned: Vec<FeatureVector> = rows.iter().map(|r| (*r).clone()).collect();
        FeatureStats::fit_rows(&owned, dim, one_hot.clone())
    };

    let params = match kind {
        ModelKind::LR => ModelParams::Linear(linear::fit_logistic(&rows, &labels, stats(), &hyper)?),
        ModelKind::SVC => ModelParams::Linear(linear::fit_svc(&rows, &labels, stats(), &hyper, seed)?),
        ModelKind::KNN => ModelParams::Knn(knn::fit(&rows, &labels, stats(), &hyper)?),
        ModelKind::NB => ModelParams::NaiveBayes(naive_bayes::fit(&rows, &labels, &one_hot, &hyper)?),
        ModelKind::DT | ModelKind::RF => {
            let binned = BinnedMatrix::build(&rows, dim, hyper.usize_or("n_bins", MAX_BINS - 1)?);
            let cart = tree::cart::CartParams {
                max_depth: hyper.usize_or("max_depth", 6)?,
                min_samples_leaf: hyper.usize_or("min_samples_leaf", 1)?,
                feature_fraction: if kind == ModelKind::RF {
                    hyper.f64_or("feature_subsample", 0.3)?
                } else {
                    1.0
                },
            };
            let (n_trees, bootstrap) = if kind == ModelKind::RF {
                (hyper.usize_or("n_trees", 100)?, hyper.bool_or("bootstrap", true)?)
            } else {
                (1, false)
            };
            check_fraction("feature_subsample", cart.feature_fraction)?;
            let trees = tree::cart::fit_forest(
                &binned,
                &labels,
                &tree::cart::ForestParams {
                    n_trees: n_trees.max(1),
                    bootstrap,
                    tree: cart,
                },
                seed,
            );
            ModelParams::Trees(TreeEnsemble {
                trees,
                base_score: pos as f64 / matrix.len() as f64,
                aggregation: tree::Aggregation::Mean,
            })
        }
        ModelKind::AdaBoost => {
            let binned = BinnedMatrix::build(&rows, dim, hyper.usize_or("n_bins", MAX_BINS - 1)?);
            let p = tree::adaboost::AdaBoostParams {
                n_stumps: hyper.usize_or("n_stumps", 50)?,
                learning_rate: positive("learning_rate", hyper.f64_or("learning_rate", 1.0)?)?,
            };
            ModelParams::Trees(tree::adaboost::fit(&binned, &labels, &p).0)
        }
        ModelKind::LightGBM | ModelKind::HGB | ModelKind::XGBoost => {
            let binned = BinnedMatrix::build(&rows, dim, hyper.usize_or("n_bins", MAX_BINS - 1)?);
            let p = gbdt_params(&hyper)?;
            ModelParams::Trees(tree::gbdt::fit(&binned, &labels, &p).0)
        }
    };
    Ok(TrainedModel {
        kind,
        hyper,
        dim,
        decision_threshold: 0.5,
        space_hash: matrix.space.manifest_hash(),
        params,
    })
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must lie in (0, 1], got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{name}` must be positive, got {v}")))
    }
}

pub(crate) fn gbdt_params(hyper: &Hyperparams) -> Result<tree::gbdt::GbdtParams> {
    use tree::gbdt::Growth;
    let growth = match hyper.str_or("growth", "depth_wise")? {
        "leaf_wise" => Growth::LeafWise {
            max_leaves: hyper.usize_or("max_leaves", 31)?.max(2),
            max_depth: match hyper.0.get("max_depth") {
                Some(_) => Some(hyper.usize_or("max_depth", 0)?),
                None => None,
            },
        },
        "depth_wise" => Growth::DepthWise {
            max_depth: hyper.usize_or("max_depth", 3)?,
        },
        other => return Err(Error::Config(format!("unknown growth policy `{other}`"))),
    };
    let l2 = hyper.f64_or("l2", 1.0)?;
    if l2 < 0.0 {
        return Err(Error::Config("`l2` must be non-negative".into()));
    }
    Ok(tree::gbdt::GbdtParams {
        n_rounds: hyper.usize_or("n_rounds", 100)?,
        learning_rate: positive("learning_rate", hyper.f64_or("learning_rate", 0.1)?)?,
        growth,
        second_order: hyper.bool_or("second_order", true)?,
        l2,
        min_samples_leaf: hyper.usize_or("min_samples_leaf", 1)?,
        min_child_weight: hyper.f64_or("min_child_weight", 0.0)?,
    })
}

impl TrainedModel {
    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            })
        }
    }

    /// Probability-like score in `[0, 1]`.
    pub fn predict_score(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        let s = match &self.params {
            ModelParams::Linear(m) => m.score(x),
            ModelParams::Knn(m) => m.score(x),
            ModelParams::NaiveBayes(m) => m.score(x),
            ModelParams::Trees(e) => e.predict_proba(x),
        };
        Ok(if s.is_nan() { 0.5 } else { s.clamp(0.0, 1.0) })
    }

    /// `1` iff the score reaches the decision threshold (ties are positive).
    pub fn predict_label(&self, x: &FeatureVector) -> Result<u8> {
        Ok((self.predict_score(x)? >= self.decision_threshold) as u8)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("decision threshold {threshold} outside [0, 1]")));
        }
        self.decision_threshold = threshold;
        Ok(self)
    }

    pub fn ensemble(&self) -> Option<&TreeEnsemble> {
        match &self.params {
            ModelParams::Trees(e) => Some(e),
            _ => None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::cohort::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: TrainedModel = crate::cohort::io::read_json(path)?;
        if !(0.0..=1.0).contains(&m.decision_threshold) {
            return Err(Error::Data(format!(
                "{}: decision threshold outside [0, 1]",
                path.display()
            )));
        }
        Ok(m)
    }
}
