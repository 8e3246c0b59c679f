//! Hyperparameter maps, search spaces and per-kind defaults.
//!
//! Search-space reference (uniform sampling; `log` ranges sample uniformly in
//! log-space, integer ranges are inclusive):
//!
//! | kind     | parameter          | range                       |
//! |----------|--------------------|-----------------------------|
//! | LR       | penalty            | {l1, l2}                    |
//! |          | lambda             | 1e-4 ..= 1e-1 (log)         |
//! | KNN      | k                  | 3 ..= 51                    |
//! |          | metric             | {euclidean, manhattan}      |
//! | NB       | var_smoothing      | 1e-11 ..= 1e-6 (log)        |
//! | SVC      | penalty            | {l1, l2}                    |
//! |          | lambda             | 1e-5 ..= 1e-2 (log)         |
//! |          | epochs             | 5 ..= 30                    |
//! | DT       | max_depth          | 2 ..= 12                    |
//! |          | min_samples_leaf   | 1 ..= 20                    |
//! | RF       | n_trees            | 20 ..= 150                  |
//! |          | max_depth          | 3 ..= 12                    |
//! |          | min_samples_leaf   | 1 ..= 10                    |
//! |          | feature_subsample  | 0.1 ..= 0.8                 |
//! | AdaBoost | n_stumps           | 20 ..= 200                  |
//! |          | learning_rate      | 0.1 ..= 1.0 (log)           |
//! | LightGBM | n_rounds           | 20 ..= 200                  |
//! |          | learning_rate      | 0.03 ..= 0.3 (log)          |
//! |          | max_leaves         | 4 ..= 31                    |
//! |          | min_samples_leaf   | 5 ..= 30                    |
//! | HGB      | n_rounds           | 20 ..= 200                  |
//! |          | learning_rate      | 0.03 ..= 0.3 (log)          |
//! |          | max_depth          | 2 ..= 6                     |
//! |          | min_samples_leaf   | 5 ..= 30                    |
//! | XGBoost  | n_rounds           | 20 ..= 200                  |
//! |          | learning_rate      | 0.03 ..= 0.3 (log)          |
//! |          | max_depth          | 2 ..= 6                     |
//! |          | l2                 | 0.1 ..= 10 (log)            |
//! |          | min_child_weight   | 0.01 ..= 2 (log)            |
//!
//! Boosting presets also pin `growth`, `second_order`, `l2` (LightGBM, HGB:
//! 0) and `n_bins` (255) as fixed entries.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparams(pub BTreeMap<String, ParamValue>);

impl Hyperparams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: ParamValue) {
        self.0.insert(name.to_string(), value);
    }

    /// Values present in `self` take precedence over `other`.
    pub fn merged_over(&self, other: &Hyperparams) -> Hyperparams {
        let mut out = other.clone();
        out.0.extend(self.0.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn f64_or(&self, name: &str, default: f64) -> Result<f64> {
        match self.0.get(name) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::Config(format!("hyperparameter `{name}` must be numeric"))),
        }
    }

    pub fn usize_or(&self, name: &str, default: usize) -> Result<usize> {
        match self.0.get(name) {
            None => Ok(default),
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(ParamValue::Float(f)) if *f >= 0.0 && f.fract() == 0.0 => Ok(*f as usize),
            Some(_) => Err(Error::Config(format!(
                "hyperparameter `{name}` must be a non-negative integer"
            ))),
        }
    }

    pub fn str_or<'a>(&'a self, name: &str, default: &'a str) -> Result<&'a str> {
        match self.0.get(name) {
            None => Ok(default),
            Some(ParamValue::Text(s)) => Ok(s),
            Some(_) => Err(Error::Config(format!("hyperparameter `{name}` must be a string"))),
        }
    }

    pub fn bool_or(&self, name: &str, default: bool) -> Result<bool> {
        match self.0.get(name) {
            None => Ok(default),
            Some(ParamValue::Bool(b)) => Ok(*b),
            Some(_) => Err(Error::Config(format!("hyperparameter `{name}` must be a boolean"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamRange {
    Int { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64, #[serde(default)] log: bool },
    Choice { options: Vec<String> },
    Fixed { value: ParamValue },
}

impl ParamRange {
    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            ParamRange::Int { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamRange::Float { lo, hi, log } => {
                if lo == hi {
                    return ParamValue::Float(*lo);
                }
                let u: f64 = rng.random();
                let v = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                ParamValue::Float(v.clamp(*lo, *hi))
            }
            ParamRange::Choice { options } => ParamValue::Text(options[rng.random_range(0..options.len())].clone()),
            ParamRange::Fixed { value } => value.clone(),
        }
    }

    fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamRange::Int { lo, hi }, ParamValue::Int(i)) => (lo..=hi).contains(&i),
            (ParamRange::Float { lo, hi, .. }, v) => v.as_f64().is_some_and(|f| f >= *lo && f <= *hi),
            (ParamRange::Choice { options }, ParamValue::Text(s)) => options.contains(s),
            (ParamRange::Fixed { value }, v) => value == v,
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ParamRange::Int { lo, hi } => lo <= hi,
            ParamRange::Float { lo, hi, log } => lo <= hi && lo.is_finite() && hi.is_finite() && (!log || *lo > 0.0),
            ParamRange::Choice { options } => !options.is_empty(),
            ParamRange::Fixed { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid parameter range {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, ParamRange>);

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.0.values().try_for_each(ParamRange::validate)
    }

    /// Draws one candidate; parameters are sampled in name order.
    pub fn sample(&self, rng: &mut impl Rng) -> Hyperparams {
        Hyperparams(self.0.iter().map(|(k, r)| (k.clone(), r.sample(rng))).collect())
    }

    pub fn contains(&self, h: &Hyperparams) -> bool {
        self.0
            .iter()
            .all(|(k, r)| h.0.get(k).is_some_and(|v| r.contains(v)))
    }

    pub fn single(h: &Hyperparams) -> SearchSpace {
        SearchSpace(
            h.0.iter()
                .map(|(k, v)| (k.clone(), ParamRange::Fixed { value: v.clone() }))
                .collect(),
        )
    }
}

fn int(lo: i64, hi: i64) -> ParamRange {
    ParamRange::Int { lo, hi }
}

fn float(lo: f64, hi: f64) -> ParamRange {
    ParamRange::Float { lo, hi, log: false }
}

fn log(lo: f64, hi: f64) -> ParamRange {
    ParamRange::Float { lo, hi, log: true }
}

fn choice(options: &[&str]) -> ParamRange {
    ParamRange::Choice {
        options: options.iter().map(|s| s.to_string()).collect(),
    }
}

fn fixed(v: ParamValue) -> ParamRange {
    ParamRange::Fixed { value: v }
}

/// Fixed entries that distinguish the three boosting presets.
pub fn preset(kind: ModelKind) -> Hyperparams {
    use ParamValue::*;
    match kind {
        ModelKind::LightGBM => Hyperparams::new()
            .with("growth", Text("leaf_wise".into()))
            .with("second_order", Bool(true))
            .with("l2", Float(0.0))
            .with("n_bins", Int(255)),
        ModelKind::HGB => Hyperparams::new()
            .with("growth", Text("depth_wise".into()))
            .with("second_order", Bool(false))
            .with("l2", Float(0.0))
            .with("n_bins", Int(255)),
        ModelKind::XGBoost => Hyperparams::new()
            .with("growth", Text("depth_wise".into()))
            .with("second_order", Bool(true))
            .with("n_bins", Int(255)),
        _ => Hyperparams::new(),
    }
}

pub fn default_search_space(kind: ModelKind) -> SearchSpace {
    let mut m: BTreeMap<String, ParamRange> = BTreeMap::new();
    let mut put = |k: &str, r: ParamRange| {
        m.insert(k.to_string(), r);
    };
    match kind {
        ModelKind::LR => {
            put("penalty", choice(&["l1", "l2"]));
            put("lambda", log(1e-4, 1e-1));
        }
        ModelKind::KNN => {
            put("k", int(3, 51));
            put("metric", choice(&["euclidean", "manhattan"]));
        }
        ModelKind::NB => put("var_smoothing", log(1e-11, 1e-6)),
        ModelKind::SVC => {
            put("penalty", choice(&["l1", "l2"]));
            put("lambda", log(1e-5, 1e-2));
            put("epochs", int(5, 30));
        }
        ModelKind::DT => {
            put("max_depth", int(2, 12));
            put("min_samples_leaf", int(1, 20));
        }
        ModelKind::RF => {
            put("n_trees", int(20, 150));
            put("max_depth", int(3, 12));
            put("min_samples_leaf", int(1, 10));
            put("feature_subsample", float(0.1, 0.8));
        }
        ModelKind::AdaBoost => {
            put("n_stumps", int(20, 200));
            put("learning_rate", log(0.1, 1.0));
        }
        ModelKind::LightGBM => {
            put("n_rounds", int(20, 200));
            put("learning_rate", log(0.03, 0.3));
            put("max_leaves", int(4, 31));
            put("min_samples_leaf", int(5, 30));
        }
        ModelKind::HGB => {
            put("n_rounds", int(20, 200));
            put("learning_rate", log(0.03, 0.3));
            put("max_depth", int(2, 6));
            put("min_samples_leaf", int(5, 30));
        }
        ModelKind::XGBoost => {
            put("n_rounds", int(20, 200));
            put("learning_rate", log(0.03, 0.3));
            put("max_depth", int(2, 6));
            put("l2", log(0.1, 10.0));
            put("min_child_weight", log(0.01, 2.0));
        }
    }
    for (k, v) in preset(kind).0 {
        m.entry(k).or_insert_with(|| fixed(v));
    }
    SearchSpace(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn samples_lie_in_space() {
        let mut rng = seed::rng(1);
        for kind in ModelKind::ALL {
            let space = default_search_space(kind);
            space.validate().unwrap();
            for _ in 0..50 {
                let h = space.sample(&mut rng);
                assert!(space.contains(&h), "{kind:?} {h:?}");
            }
        }
    }

    #[test]
    fn hyperparams_json_is_a_plain_map() {
        let h = Hyperparams::new()
            .with("k", ParamValue::Int(5))
            .with("metric", ParamValue::Text("euclidean".into()))
            .with("lambda", ParamValue::Float(0.5));
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"k":5,"lambda":0.5,"metric":"euclidean"}"#);
        let back: Hyperparams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn typed_getters() {
        let h = Hyperparams::new().with("k", ParamValue::Int(5));
        assert_eq!(h.usize_or("k", 1).unwrap(), 5);
        assert_eq!(h.usize_or("missing", 7).unwrap(), 7);
        assert!(h.str_or("k", "x").is_err());
        assert_eq!(h.f64_or("k", 0.0).unwrap(), 5.0);
    }
}
