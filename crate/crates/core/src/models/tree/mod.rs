//! Binary decision trees and the ensembles built from them.

pub mod adaboost;
pub mod binning;
pub mod cart;
pub mod gbdt;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x.get(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, gain, .. } => Some((feature, gain)),
            Node::Leaf { .. } => None,
        })
    }
}

/// How tree outputs combine into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Aggregation {
    /// Average of leaf probabilities (decision tree, random forest).
    Mean,
    /// `sigmoid(scale * (base_score + sum of leaves))` (boosting).
    Logistic { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub base_score: f64,
    pub aggregation: Aggregation,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TreeEnsemble {
    /// Raw additive output before the link (boosting) or the mean (forests).
    pub fn raw(&self, x: &FeatureVector) -> f64 {
        match self.aggregation {
            Aggregation::Mean => {
                if self.trees.is_empty() {
                    return self.base_score;
                }
                self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
            }
            Aggregation::Logistic { .. } => self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>(),
        }
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        match self.aggregation {
            Aggregation::Mean => self.raw(x).clamp(0.0, 1.0),
            Aggregation::Logistic { scale } => sigmoid(scale * self.raw(x)),
        }
    }

    pub fn n_splits(&self) -> usize {
        self.trees.iter().map(|t| t.splits().count()).sum()
    }
}
