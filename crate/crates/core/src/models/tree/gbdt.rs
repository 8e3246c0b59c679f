//! Histogram gradient-boosted trees on the logistic loss.
//!
//! One engine serves three presets that differ only in growth policy and in
//! whether the hessian enters the gain and leaf formulas. With gradient sums
//! `G`, hessian sums `H` (the sample count in first-order mode) and L2 penalty
//! `l2`, a split scores
//! `0.5 * (GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2))` and a leaf takes
//! `-learning_rate * G / (H + l2)`.

use super::binning::BinnedMatrix;
use super::{sigmoid, Aggregation, Node, Tree, TreeEnsemble};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// Always split the leaf with the largest gain until `max_leaves`.
    LeafWise { max_leaves: usize, max_depth: Option<usize> },
    /// Split every splittable leaf, level by level, down to `max_depth`.
    DepthWise { max_depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub growth: Growth,
    pub second_order: bool,
    pub l2: f64,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Leaf {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    g: f64,
    h: f64,
    best: Option<SplitChoice>,
}

struct Ctx<'a> {
    binned: &'a BinnedMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
}

impl Ctx<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.l2)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.l2;
        if denom <= 0.0 {
            0.0
        } else {
            -self.params.learning_rate * g / denom
        }
    }

    fn best_for_feature(&self, rows: &[usize], f: usize, g: f64, h: f64) -> Option<SplitChoice> {
        let nb = self.binned.n_bins(f);
        if nb < 2 {
            return None;
        }
        let col = &self.binned.columns[f];
        let mut hg = vec![0.0; nb];
        let mut hh = vec![0.0; nb];
        let mut hc = vec![0usize; nb];
        for &r in rows {
            let b = col[r] as usize;
            hg[b] += self.grad[r];
            hh[b] += self.hess[r];
            hc[b] += 1;
        }
        let parent = self.score(g, h);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        let mut best: Option<SplitChoice> = None;
        for b in 0..nb - 1 {
            gl += hg[b];
            hl += hh[b];
            nl += hc[b];
            let nr = rows.len() - nl;
            if hc[b] == 0 || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                continue;
            }
            let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
            if gain > 1e-12 && best.is_none_or(|c| gain > c.gain) {
                best = Some(SplitChoice { feature: f, bin: b, gain });
            }
        }
        best
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<SplitChoice> {
        let dim = self.binned.dim();
        let per: Vec<Option<SplitChoice>> = if rows.len() * dim > 50_000 {
            par::map_range(dim, |f| self.best_for_feature(rows, f, g, h))
        } else {
            (0..dim).map(|f| self.best_for_feature(rows, f, g, h)).collect()
        };
        per.into_iter().flatten().fold(None, |acc: Option<SplitChoice>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
    }

    fn make_leaf(&self, node: usize, rows: Vec<usize>, depth: usize) -> Leaf {
        let g = rows.iter().map(|&r| self.grad[r]).sum();
        let h = rows.iter().map(|&r| self.hess[r]).sum();
        let depth_ok = match self.params.growth {
            Growth::LeafWise { max_depth, .. } => max_depth.is_none_or(|d| depth < d),
            Growth::DepthWise { max_depth } => depth < max_depth,
        };
        let best = if depth_ok { self.best_split(&rows, g, h) } else { None };
        Leaf {
            node,
            rows,
            depth,
            g,
            h,
            best,
        }
    }

    /// Replaces `leaf` with a split node and returns its two children.
    fn split(&self, nodes: &mut Vec<Node>, leaf: Leaf) -> (Leaf, Leaf) {
        let s = leaf.best.expect("split called on unsplittable leaf");
        let col = &self.binned.columns[s.feature];
        let (lr, rr): (Vec<usize>, Vec<usize>) = leaf.rows.iter().partition(|&&r| (col[r] as usize) <= s.bin);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[leaf.node] = Node::Split {
            feature: s.feature,
            threshold: self.binned.threshold(s.feature, s.bin),
            gain: s.gain,
            left,
            right,
        };
        (self.make_leaf(left, lr, leaf.depth + 1), self.make_leaf(right, rr, leaf.depth + 1))
    }

    fn grow(&self, all_rows: Vec<usize>) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut done: Vec<Leaf> = Vec::new();
        let root = self.make_leaf(0, all_rows, 0);
        match self.params.growth {
            Growth::LeafWise { max_leaves, .. } => {
                let mut open = vec![root];
                let mut n_leaves = 1;
                while n_leaves < max_leaves.max(1) {
                    // largest gain wins; earliest-created leaf on ties
                    let pick = open
                        .iter()
                        .enumerate()
                        .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
                        .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                            Some((_, bg)) if bg >= g => acc,
                            _ => Some((i, g)),
                        });
                    let Some((i, _)) = pick else { break };
                    let leaf = open.remove(i);
                    let (l, r) = self.split(&mut nodes, leaf);
                    open.push(l);
                    open.push(r);
                    n_leaves += 1;
                }
                done.extend(open);
            }
            Growth::DepthWise { .. } => {
                let mut level = vec![root];
                while !level.is_empty() {
                    let mut next = Vec::new();
                    for leaf in level {
                        if leaf.best.is_some() {
                            let (l, r) = self.split(&mut nodes, leaf);
                            next.push(l);
                            next.push(r);
                        } else {
                            done.push(leaf);
                        }
                    }
                    level = next;
                }
            }
        }
        for leaf in done {
            nodes[leaf.node] = Node::Leaf {
                value: self.leaf_value(leaf.g, leaf.h),
            };
        }
        Tree { nodes }
    }
}

fn logistic_loss(raw: &[f64], labels: &[u8]) -> f64 {
    let n = raw.len().max(1) as f64;
    raw.iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - y as f64 * z
        })
        .sum::<f64>()
        / n
}

/// Fits the ensemble and returns it with the mean training log-loss before
/// the first round and after every round.
pub fn fit(binned: &BinnedMatrix, labels: &[u8], params: &GbdtParams) -> (TreeEnsemble, Vec<f64>) {
    let n = binned.n_rows;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let rate = (pos / n.max(1) as f64).clamp(1e-12, 1.0 - 1e-12);
    let base = (rate / (1.0 - rate)).ln();
    let mut raw = vec![base; n];
    let mut trace = vec![logistic_loss(&raw, labels)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![1.0; n];
    for _ in 0..params.n_rounds {
        for r in 0..n {
            let p = sigmoid(raw[r]);
            grad[r] = p - labels[r] as f64;
            if params.second_order {
                hess[r] = (p * (1.0 - p)).max(1e-16);
            }
        }
        let ctx = Ctx {
            binned,
            grad: &grad,
            hess: &hess,
            params,
        };
        let tree = ctx.grow((0..n).collect());
        let cols = &binned.columns;
        for (r, z) in raw.iter_mut().enumerate() {
            *z += predict_binned(&tree, binned, cols, r);
        }
        trace.push(logistic_loss(&raw, labels));
        trees.push(tree);
    }
    (
        TreeEnsemble {
            trees,
            base_score: base,
            aggregation: Aggregation::Logistic { scale: 1.0 },
        },
        trace,
    )
}

fn predict_binned(tree: &Tree, binned: &BinnedMatrix, cols: &[Vec<u8>], r: usize) -> f64 {
    let mut i = 0;
    loop {
        match tree.nodes[i] {
            Node::Leaf { value } => return value,
            Node::Split {
                feature, threshold, left, right, ..
            } => {
                let edge = binned.edges[feature][cols[feature][r] as usize];
                i = if edge <= threshold { left } else { right };
            }
        }
    }
}
