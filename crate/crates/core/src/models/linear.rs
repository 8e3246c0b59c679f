//! Logistic regression (proximal gradient, FISTA) and a linear support
//! vector classifier (averaged hinge-loss SGD).
//!
//! Both work on standardized features without materialising them: column `j`
//! of the standardized matrix is `scale[j] * x[j] + shift[j]`, which keeps
//! every pass over the data sparse.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hyper::Hyperparams;
use super::tree::sigmoid;
use crate::error::{Error, Result};
use crate::features::{FeatureStats, STD_FLOOR};
use crate::features::FeatureVector;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

impl Penalty {
    fn parse(h: &Hyperparams) -> Result<Penalty> {
        match h.str_or("penalty", "l2")?.to_ascii_lowercase().as_str() {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            other => Err(Error::Config(format!("unknown penalty `{other}`"))),
        }
    }
}

/// Weights live in standardized space; `score` is `sigmoid(w . z + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub stats: FeatureStats,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Per-column affine map from raw to standardized values.
struct Affine {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl Affine {
    fn new(stats: &FeatureStats) -> Self {
        let (scale, shift) = (0..stats.dim())
            .map(|j| {
                if stats.one_hot[j] {
                    (1.0, 0.0)
                } else if stats.sd[j] <= STD_FLOOR {
                    (0.0, 0.0)
                } else {
                    (1.0 / stats.sd[j], -stats.mean[j] / stats.sd[j])
                }
            })
            .unzip();
        Affine { scale, shift }
    }

    fn margin(&self, w: &[f64], bias: f64, x: &FeatureVector) -> f64 {
        let base: f64 = w.iter().zip(&self.shift).map(|(w, s)| w * s).sum();
        bias + base + x.entries().iter().map(|&(j, v)| w[j] * self.scale[j] * v).sum::<f64>()
    }

    fn dense(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.shift.clone();
        for &(j, v) in x.entries() {
            z[j] += self.scale[j] * v;
        }
        z
    }
}

impl LinearModel {
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        Affine::new(&self.stats).margin(&self.weights, self.bias, x)
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of `Z'Z / n` for `Z = [standardized X | 1]`, by power
/// iteration. Used as the Lipschitz constant of the averaged log-loss
/// gradient (times 1/4).
fn gram_norm(rows: &[&FeatureVector], aff: &Affine) -> f64 {
    let d = aff.scale.len();
    let n = rows.len() as f64;
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d + 1];
        for x in rows {
            let zv = aff.margin(&v[..d], v[d], x);
            let zv = zv / n;
            for (j, s) in aff.shift.iter().enumerate() {
                out[j] += zv * s;
            }
            for &(j, val) in x.entries() {
                out[j] += zv * aff.scale[j] * val;
            }
            out[d] += zv;
        }
        let norm = out.iter().map(|o| o * o).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let prev = lambda;
        lambda = norm;
        v = out.into_iter().map(|o| o / norm).collect();
        if (lambda - prev).abs() <= 1e-9 * lambda {
            break;
        }
    }
    lambda
}

/// Minimises `mean log-loss + penalty`, where the penalty is
/// `lambda * |w|_1` or `lambda / 2 * |w|^2`; the bias is unpenalised.
pub fn fit_logistic(rows: &[&FeatureVector], labels: &[u8], stats: FeatureStats, h: &Hyperparams) -> Result<LinearModel> {
    let penalty = Penalty::parse(h)?;
    let lambda = h.f64_or("lambda", 1e-2)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config("`lambda` must be non-negative".into()));
    }
    let max_iter = h.usize_or("max_iter", 500)?;
    let tol = h.f64_or("tol", 1e-7)?;
    let aff = Affine::new(&stats);
    let d = stats.dim();
    let n = rows.len() as f64;
    let l2 = if penalty == Penalty::L2 { lambda } else { 0.0 };
    let lip = 0.25 * gram_norm(rows, &aff) + l2;
    let step = 1.0 / lip.max(1e-12);

    // iterate (w, b), extrapolated point (yw, yb)
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut yw = w.clone();
    let mut yb = b;
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let r = (sigmoid(aff.margin(&yw, yb, x)) - y as f64) / n;
            gb += r;
            for &(j, v) in x.entries() {
                gw[j] += r * aff.scale[j] * v;
            }
        }
        for j in 0..d {
            gw[j] += gb * aff.shift[j] + l2 * yw[j];
        }
        let mut nw: Vec<f64> = (0..d).map(|j| yw[j] - step * gw[j]).collect();
        if penalty == Penalty::L1 {
            nw.iter_mut().for_each(|v| *v = soft_threshold(*v, step * lambda));
        }
        let nb = yb - step * gb;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        let delta: f64 = nw.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + (nb - b).powi(2);
        let size: f64 = nw.iter().map(|a| a * a).sum::<f64>() + nb * nb;
        yw = nw.iter().zip(&w).map(|(a, b)| a + mom * (a - b)).collect();
        yb = nb + mom * (nb - b);
        w = nw;
        b = nb;
        t = t_next;
        if delta.sqrt() <= tol * size.sqrt().max(1.0) {
            break;
        }
    }
    Ok(LinearModel { stats, weights: w, bias: b })
}

/// Linear SVC: per-sample subgradient steps on the hinge loss with step
/// `eta0 / (1 + eta0 * lambda * t)`, L2 shrinkage or L1 soft-thresholding,
/// and iterate averaging. Rows are visited in a seeded permutation each epoch.
pub fn fit_svc(rows: &[&FeatureVector], labels: &[u8], stats: FeatureStats, h: &Hyperparams, seed_: u64) -> Result<LinearModel> {
    let penalty = Penalty::parse(h)?;
    let lambda = h.f64_or("lambda", 1e-3)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config("`lambda` must be non-negative".into()));
    }
    let epochs = h.usize_or("epochs", 10)?.max(1);
    let eta0 = h.f64_or("eta0", 0.1)?;
    if eta0 <= 0.0 {
        return Err(Error::Config("`eta0` must be positive".into()));
    }
    let aff = Affine::new(&stats);
    let d = stats.dim();
    let mut rng = seed::rng(seed::derive(seed_, &["svc"]));
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; d];
    let mut avg_b = 0.0;
    let mut steps = 0.0f64;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = eta0 / (1.0 + eta0 * lambda * steps);
            let y = if labels[i] == 1 { 1.0 } else { -1.0 };
            let z = aff.dense(rows[i]);
            let m: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            if penalty == Penalty::L2 {
                let shrink = (1.0 - eta * lambda).max(0.0);
                w.iter_mut().for_each(|v| *v *= shrink);
            }
            if y * m < 1.0 {
                for (wj, zj) in w.iter_mut().zip(&z) {
                    *wj += eta * y * zj;
                }
                b += eta * y;
            }
            if penalty == Penalty::L1 {
                w.iter_mut().for_each(|v| *v = soft_threshold(*v, eta * lambda));
            }
            steps += 1.0;
            let k = 1.0 / steps;
            for (a, v) in avg_w.iter_mut().zip(&w) {
                *a += (v - *a) * k;
            }
            avg_b += (b - avg_b) * k;
        }
    }
    Ok(LinearModel {
        stats,
        weights: avg_w,
        bias: avg_b,
    })
}
