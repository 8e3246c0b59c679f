//! CART classification trees (Gini impurity) and random forests.

use rand::seq::index;
use rand::Rng;

use super::binning::BinnedMatrix;
use super::{Node, Tree};
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each node (1.0 = all).
    pub feature_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: CartParams,
}

/// Count-weighted Gini impurity, `n * gini = 2 p (n - p) / n`.
fn weighted_gini(pos: f64, n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

struct Candidate {
    feature: usize,
    bin: usize,
    decrease: f64,
}

fn best_for_feature(binned: &BinnedMatrix, labels: &[u8], rows: &[usize], f: usize, min_leaf: usize) -> Option<Candidate> {
    let nb = binned.n_bins(f);
    if nb < 2 {
        return None;
    }
    let col = &binned.columns[f];
    let mut count = vec![0usize; nb];
    let mut pos = vec![0usize; nb];
    for &r in rows {
        let b = col[r] as usize;
        count[b] += 1;
        pos[b] += labels[r] as usize;
    }
    let n = rows.len();
    let p: usize = pos.iter().sum();
    let parent = weighted_gini(p as f64, n as f64);
    let (mut nl, mut pl) = (0usize, 0usize);
    let mut best: Option<Candidate> = None;
    for b in 0..nb - 1 {
        nl += count[b];
        pl += pos[b];
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf || count[b] == 0 {
            continue;
        }
        let dec = parent - weighted_gini(pl as f64, nl as f64) - weighted_gini((p - pl) as f64, nr as f64);
        if dec > 1e-12 && best.as_ref().is_none_or(|c| dec > c.decrease) {
            best = Some(Candidate {
                feature: f,
                bin: b,
                decrease: dec,
            });
        }
    }
    best
}

fn best_split(binned: &BinnedMatrix, labels: &[u8], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<Candidate> {
    let per_feature: Vec<Option<Candidate>> = if rows.len() * features.len() > 50_000 {
        par::map(features, |&f| best_for_feature(binned, labels, rows, f, min_leaf))
    } else {
        features
            .iter()
            .map(|&f| best_for_feature(binned, labels, rows, f, min_leaf))
            .collect()
    };
    // first feature wins ties
    per_feature.into_iter().flatten().fold(None, |acc: Option<Candidate>, c| match acc {
        Some(a) if a.decrease >= c.decrease => Some(a),
        _ => Some(c),
    })
}

/// Grows one tree on `sample` (row indices into `binned`, repeats allowed).
/// Leaves hold the positive fraction; split gains are the weighted impurity
/// decrease normalised by the sample size.
pub fn fit_tree(binned: &BinnedMatrix, labels: &[u8], sample: &[usize], params: &CartParams, seed: u64) -> Tree {
    let mut rng = seed::rng(seed);
    let dim = binned.dim();
    let n_root = sample.len().max(1) as f64;
    let all_features: Vec<usize> = (0..dim).collect();
    let m = ((params.feature_fraction * dim as f64).ceil() as usize).clamp(1, dim.max(1));
    let min_leaf = params.min_samples_leaf.max(1);

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, sample.to_vec(), 0usize)];
    while let Some((id, rows, depth)) = stack.pop() {
        let pos = rows.iter().filter(|&&r| labels[r] == 1).count();
        let value = if rows.is_empty() { 0.0 } else { pos as f64 / rows.len() as f64 };
        nodes[id] = Node::Leaf { value };
        if depth >= params.max_depth || pos == 0 || pos == rows.len() || rows.len() < 2 * min_leaf {
            continue;
        }
        let features = if m < dim {
            let mut f = index::sample(&mut rng, dim, m).into_vec();
            f.sort_unstable();
            f
        } else {
            all_features.clone()
        };
        let Some(best) = best_split(binned, labels, &rows, &features, min_leaf) else {
            continue;
        };
        let col = &binned.columns[best.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| (col[r] as usize) <= best.bin);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: binned.threshold(best.feature, best.bin),
            gain: best.decrease / n_root,
            left,
            right,
        };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    Tree { nodes }
}

pub fn fit_forest(binned: &BinnedMatrix, labels: &[u8], params: &ForestParams, seed: u64) -> Vec<Tree> {
    let n = binned.n_rows;
    par::map_range(params.n_trees, |t| {
        let tree_seed = seed::derive_index(seed, t as u64);
        let sample: Vec<usize> = if params.bootstrap {
            let mut rng = seed::rng(seed::derive(tree_seed, &["bootstrap"]));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        fit_tree(binned, labels, &sample, &params.tree, tree_seed)
    })
}
