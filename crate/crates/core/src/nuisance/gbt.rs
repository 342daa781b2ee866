//! Second-order gradient boosted regression trees.
//!
//! Trees are grown level by level with exact greedy splits over presorted
//! features. Split gain is the usual `G_L^2/H_L + G_R^2/H_R - G^2/H`.
//! For the pinball loss the tree structure is found from the subgradient
//! with unit hessians and each leaf is then set to the level quantile of
//! the residuals it holds, which makes the training loss nonincreasing.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    /// Binary targets in {0, 1}; predictions are probabilities.
    Logistic,
    /// Check loss at the given level.
    Pinball(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { trees: 200, depth: 3, learning_rate: 0.1, min_leaf: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gbt {
    loss: Loss,
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    train_loss: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn pinball(level: f64, r: f64) -> f64 {
    if r >= 0.0 {
        level * r
    } else {
        (level - 1.0) * r
    }
}

fn lower_quantile(values: &mut [f64], level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    super::knn::empirical_quantile_sorted(values, level)
}

impl Gbt {
    /// Fits on row-major `xs`. Panics only on empty input.
    pub fn fit(xs: &[Vec<f64>], y: &[f64], loss: Loss, params: &GbtParams) -> Self {
        let n = xs.len();
        assert!(n > 0 && n == y.len(), "gbt needs matching nonempty inputs");
        let d = xs[0].len();
        let cols: Vec<Vec<f64>> = (0..d).map(|j| xs.iter().map(|x| x[j]).collect()).collect();
        let order: Vec<Vec<usize>> = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let base = match loss {
            Loss::Squared => y.iter().sum::<f64>() / n as f64,
            Loss::Logistic => {
                let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            Loss::Pinball(level) => lower_quantile(&mut y.to_vec(), level),
        };
        let l2 = match loss {
            Loss::Logistic => 1.0,
            _ => 0.0,
        };
        let mut raw = vec![base; n];
        let mut model = Gbt { loss, base, learning_rate: params.learning_rate, trees: Vec::new(), train_loss: Vec::new() };
        model.train_loss.push(model.loss_value(&raw, y));

        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..params.trees {
            for i in 0..n {
                let (gi, hi) = match loss {
                    Loss::Squared => (raw[i] - y[i], 1.0),
                    Loss::Logistic => {
                        let p = sigmoid(raw[i]);
                        (p - y[i], (p * (1.0 - p)).max(1e-12))
                    }
                    Loss::Pinball(level) => (if y[i] < raw[i] { 1.0 - level } else { -level }, 1.0),
                };
                g[i] = gi;
                h[i] = hi;
            }
            let (tree, leaf_of) = grow(&cols, &order, &g, &h, l2, params);
            let tree = match loss {
                Loss::Pinball(level) => refit_quantile_leaves(tree, &leaf_of, y, &raw, level),
                _ => tree,
            };
            for i in 0..n {
                if let Node::Leaf(v) = tree.nodes[leaf_of[i]] {
                    raw[i] += params.learning_rate * v;
                }
            }
            model.trees.push(tree);
            model.train_loss.push(model.loss_value(&raw, y));
        }
        model
    }

    fn loss_value(&self, raw: &[f64], y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let s: f64 = match self.loss {
            Loss::Squared => raw.iter().zip(y).map(|(f, y)| 0.5 * (y - f) * (y - f)).sum(),
            Loss::Logistic => raw
                .iter()
                .zip(y)
                .map(|(f, y)| {
                    // log(1 + e^f) - y f, computed stably
                    let softplus = if *f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
                    softplus - y * f
                })
                .sum(),
            Loss::Pinball(level) => raw.iter().zip(y).map(|(f, y)| pinball(level, y - f)).sum(),
        };
        s / n
    }

    /// Mean training loss before any tree and after each tree.
    pub fn train_loss_path(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Prediction on the response scale (probability for the logistic loss).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let r = self.predict_raw(x);
        match self.loss {
            Loss::Logistic => sigmoid(r),
            _ => r,
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree; returns it with the leaf index of every training row.
fn grow(
    cols: &[Vec<f64>],
    order: &[Vec<usize>],
    g: &[f64],
    h: &[f64],
    l2: f64,
    params: &GbtParams,
) -> (Tree, Vec<usize>) {
    let n = g.len();
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut node_of = vec![0usize; n];
    let mut frontier = vec![0usize];
    let score = |gs: f64, hs: f64| gs * gs / (hs + l2);

    for _ in 0..params.depth {
        let slots = nodes.len();
        let mut active = vec![false; slots];
        frontier.iter().for_each(|&v| active[v] = true);
        let mut tg = vec![0.0; slots];
        let mut th = vec![0.0; slots];
        let mut tc = vec![0usize; slots];
        for i in 0..n {
            let v = node_of[i];
            tg[v] += g[i];
            th[v] += h[i];
            tc[v] += 1;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; slots];
        for (f, col) in cols.iter().enumerate() {
            let mut gl = vec![0.0; slots];
            let mut hl = vec![0.0; slots];
            let mut cl = vec![0usize; slots];
            let mut last: Vec<Option<f64>> = vec![None; slots];
            for &i in &order[f] {
                let v = node_of[i];
                if !active[v] {
                    continue;
                }
                let x = col[i];
                if let Some(prev) = last[v] {
                    if x > prev && cl[v] >= params.min_leaf && tc[v] - cl[v] >= params.min_leaf {
                        let gain = score(gl[v], hl[v]) + score(tg[v] - gl[v], th[v] - hl[v])
                            - score(tg[v], th[v]);
                        if best[v].is_none_or(|b| gain > b.gain) {
                            best[v] = Some(Candidate { gain, feature: f, threshold: 0.5 * (prev + x) });
                        }
                    }
                }
                gl[v] += g[i];
                hl[v] += h[i];
                cl[v] += 1;
                last[v] = Some(x);
            }
        }
        let mut next = Vec::new();
        for &v in &frontier {
            if let Some(c) = best[v].filter(|c| c.gain > 1e-12) {
                let left = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                nodes[v] = Node::Split { feature: c.feature, threshold: c.threshold, left, right: left + 1 };
                next.push(left);
                next.push(left + 1);
            }
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            if let Node::Split { feature, threshold, left, right } = nodes[node_of[i]] {
                node_of[i] = if cols[feature][i] <= threshold { left } else { right };
            }
        }
        frontier = next;
    }

    let slots = nodes.len();
    let mut sg = vec![0.0; slots];
    let mut sh = vec![0.0; slots];
    for i in 0..n {
        sg[node_of[i]] += g[i];
        sh[node_of[i]] += h[i];
    }
    for (v, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf(val) = node {
            *val = if sh[v] + l2 > 0.0 { -sg[v] / (sh[v] + l2) } else { 0.0 };
        }
    }
    (Tree { nodes }, node_of)
}

fn refit_quantile_leaves(mut tree: Tree, leaf_of: &[usize], y: &[f64], raw: &[f64], level: f64) -> Tree {
    let mut residuals: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
    for (i, &leaf) in leaf_of.iter().enumerate() {
        residuals[leaf].push(y[i] - raw[i]);
    }
    for (v, node) in tree.nodes.iter_mut().enumerate() {
        if let Node::Leaf(val) = node {
            *val = if residuals[v].is_empty() { 0.0 } else { lower_quantile(&mut residuals[v], level) };
        }
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::rng_from_seed;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let y = xs.iter().map(|x| x[0] * 2.0 + (x[1] > 0.0) as i32 as f64 + rng.random_range(-0.5..0.5)).collect();
        (xs, y)
    }

    #[test]
    fn squared_loss_fits_signal() {
        let (xs, y) = toy(500, 1);
        let m = Gbt::fit(&xs, &y, Loss::Squared, &GbtParams::default());
        let path = m.train_loss_path();
        assert!(path.last().unwrap() < &(path[0] * 0.1));
        assert!((m.predict(&[1.0, 1.0]) - 3.0).abs() < 0.5);
    }

    #[test]
    fn pinball_loss_nonincreasing() {
        for level in [0.1, 1.0 / 3.0, 0.5, 0.9] {
            let (xs, y) = toy(300, 2);
            let m = Gbt::fit(&xs, &y, Loss::Pinball(level), &GbtParams { trees: 60, ..Default::default() });
            for w in m.train_loss_path().windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{level}: {} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn logistic_separable() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0 - 1.0]).collect();
        let y: Vec<f64> = xs.iter().map(|x| (x[0] > 0.0) as i32 as f64).collect();
        let m = Gbt::fit(&xs, &y, Loss::Logistic, &GbtParams::default());
        for t in [0.2, 0.5, 0.9] {
            assert!(m.predict(&[t]) > 0.9);
            assert!(m.predict(&[-t]) < 0.1);
        }
    }

    #[test]
    fn min_leaf_blocks_splits() {
        let (xs, y) = toy(15, 3);
        let m = Gbt::fit(&xs, &y, Loss::Squared, &GbtParams { min_leaf: 10, ..Default::default() });
        let mean = y.iter().sum::<f64>() / 15.0;
        assert!((m.predict(&[0.0, 0.0]) - mean).abs() < 1e-12);
    }
}
